"""Reflection feature enhancement.

A conv-deconv hourglass over the (boundary-enhanced) features. The encoder
halves the grid four times and re-expands once; the decoder walks back up,
concatenating each stage with the matching encoder map (resized to the
current grid before concatenation so the recurrence stays well-typed at any
input size). Its final stride-1 deconvolution emits 2 + 32 channels: a
two-class local reflection mask and a feature block that is projected back to
the input width and added residually.
"""

from __future__ import annotations

import warnings

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import init_module_weights
from .errors import ShapeError

MIN_INPUT_SIZE = 16

ENCODER_CHANNELS = (32, 64, 64, 128, 128)   # E1..E5; E0 is a bare conv to 32
DECODER_CHANNELS = (128, 64, 64, 32)        # D1..D4
FEATURE_CHANNELS = 32                       # width of the split-off feature tensor


def extract_reflective_pseudo_gt(semantic_gt: torch.Tensor,
                                 reflective_class_ids) -> torch.Tensor:
    """Binary mask marking pixels whose class id is in the reflective set."""
    ids = sorted(set(int(i) for i in reflective_class_ids))
    if not ids:
        warnings.warn("empty reflective class set: reflection supervision is all-background")
        return torch.zeros_like(semantic_gt)
    mask = torch.zeros_like(semantic_gt)
    for cid in ids:
        mask = mask | (semantic_gt == cid).to(mask.dtype)
    return mask


def _conv_block(in_ch, out_ch):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


def _deconv_block(in_ch, out_ch):
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, out_ch, kernel_size=3, padding=1),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class ReflectionEnhancer(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        ec = ENCODER_CHANNELS
        dc = DECODER_CHANNELS

        self.stem = nn.Conv2d(channels, ec[0], kernel_size=3, padding=1)  # E0
        self.enc = nn.ModuleList([
            _conv_block(ec[0], ec[0]),
            _conv_block(ec[0], ec[1]),
            _conv_block(ec[1], ec[2]),
            _conv_block(ec[2], ec[3]),
            _conv_block(ec[3], ec[4]),
        ])
        # decoder block j consumes D_{j-1} concatenated with skip E_{5-j}
        skip = (ec[3], ec[2], ec[1], ec[0])
        prev = ec[4]
        blocks = []
        for j, out_ch in enumerate(dc):
            blocks.append(_deconv_block(prev + skip[j], out_ch))
            prev = out_ch
        self.dec = nn.ModuleList(blocks)
        self.head = nn.ConvTranspose2d(dc[-1], 2 + FEATURE_CHANNELS, kernel_size=3, padding=1)
        self.out_proj = nn.Conv2d(FEATURE_CHANNELS, channels, kernel_size=1)
        init_module_weights(self)

    def forward(self, y: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (enhanced features, reflection logits (B, 2, h, w))."""
        h, w = y.shape[2:]
        if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
            raise ShapeError(
                f"reflection module needs spatial size >= {MIN_INPUT_SIZE}, got {h}x{w}"
            )

        e = self.stem(y)
        skips = []
        for i, block in enumerate(self.enc):
            e = block(e)
            if i < 4:
                e = F.max_pool2d(e, kernel_size=2)
            else:
                e = F.interpolate(e, size=(h // 8, w // 8), mode="bilinear", align_corners=False)
            skips.append(e)

        # decode toward full resolution, resizing each skip to the current grid
        targets = [(h // 4, w // 4), (h // 2, w // 2), (h, w), None]
        d = skips[4]
        for j, block in enumerate(self.dec):
            skip = skips[3 - j]
            if skip.shape[2:] != d.shape[2:]:
                skip = F.interpolate(skip, size=d.shape[2:], mode="bilinear", align_corners=False)
            d = block(torch.cat([d, skip], dim=1))
            if targets[j] is not None:
                d = F.interpolate(d, size=targets[j], mode="bilinear", align_corners=False)
        out = self.head(d)

        reflection_logits = out[:, :2]
        enhanced = y + self.out_proj(out[:, 2:])
        return enhanced, reflection_logits
