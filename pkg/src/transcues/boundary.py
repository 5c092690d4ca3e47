"""Boundary feature enhancement.

Five parallel conv branches (1x1 plus 3x3 at dilations 1/2/4/8, each
Conv-BN-ReLU) extract multi-rate context from the fused features. Their sum
passes through a 1x1 fusion conv; the fusion output both feeds a one-channel
boundary head and re-enters the main path as

    enhanced = (fusion + x) * x

so zero input is annihilated regardless of parameters. The Sobel/combine
helpers below are shared with the boundary loss.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import init_module_weights

SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0],
                        [-2.0, 0.0, 2.0],
                        [-1.0, 0.0, 1.0]])

BRANCH_DILATIONS = (1, 2, 4, 8)


def sobel_gradients(mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Absolute horizontal/vertical Sobel responses of a (B, 1, H, W) map.

    Correlation with the 3x3 Sobel pair, stride 1, zero padding 1; magnitudes
    are returned since the downstream combine step floors against a positive
    constant.
    """
    kx = SOBEL_X.to(dtype=mask.dtype, device=mask.device).reshape(1, 1, 3, 3)
    ky = kx.transpose(2, 3)
    gx = F.conv2d(mask, kx, padding=1)
    gy = F.conv2d(mask, ky, padding=1)
    return gx.abs(), gy.abs()


def gradient_combine(a: torch.Tensor, b: torch.Tensor, tau: float = 0.01) -> torch.Tensor:
    """Merge two gradient magnitude maps: max of their mean and the noise floor tau."""
    return torch.clamp(0.5 * (a + b), min=tau)


class BoundaryEnhancer(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        branches = [nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=1),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )]
        for d in BRANCH_DILATIONS:
            branches.append(nn.Sequential(
                nn.Conv2d(channels, channels, kernel_size=3, padding=d, dilation=d),
                nn.BatchNorm2d(channels),
                nn.ReLU(inplace=True),
            ))
        self.branches = nn.ModuleList(branches)
        self.fuse = nn.Conv2d(channels, channels, kernel_size=1)
        self.boundary_head = nn.Conv2d(channels, 1, kernel_size=1)
        init_module_weights(self)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (enhanced features, boundary logits (B, 1, h, w))."""
        branch_sum = None
        for branch in self.branches:
            y = branch(x)
            branch_sum = y if branch_sum is None else branch_sum + y
        fused = self.fuse(branch_sum)
        boundary_logits = self.boundary_head(fused)
        enhanced = (fused + x) * x
        return enhanced, boundary_logits
