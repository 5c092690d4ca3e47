"""Lightweight decoder: fuse the feature pyramid into one stride-4 map.

Each pyramid level is linearly projected to a common embedding width,
bilinearly upsampled to the stride-4 grid, and summed. One transformer-style
mixing layer then refines the fused map, so the decoder stays
transformer-based without the cost of a second pyramid.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import BackboneConfig, EncoderLayer, init_module_weights
from .errors import ConfigurationError, ShapeError


class FeatureFusionDecoder(nn.Module):
    def __init__(self, config: BackboneConfig, mix_sr_ratio: int = 8, mix_heads: int = 2):
        super().__init__()
        e = config.embed_channel
        self.embed_channel = e
        self.projections = nn.ModuleList(nn.Conv2d(c, e, kernel_size=1) for c in config.channels)
        self.mix = EncoderLayer(e, heads=mix_heads, sr_ratio=mix_sr_ratio, mlp_ratio=4)
        init_module_weights(self)

    def forward(self, pyramid: list[torch.Tensor]) -> torch.Tensor:
        if len(pyramid) != 4:
            raise ShapeError(f"expected a 4-level pyramid, got {len(pyramid)} levels")
        batches = {lvl.shape[0] for lvl in pyramid}
        if len(batches) != 1:
            raise ShapeError(f"pyramid levels disagree on batch size: {sorted(batches)}")
        target = pyramid[0].shape[2:]
        fused = None
        for lvl, proj in zip(pyramid, self.projections):
            x = proj(lvl)
            if x.shape[2:] != target:
                x = F.interpolate(x, size=target, mode="bilinear", align_corners=False)
            fused = x if fused is None else fused + x
        b, c = fused.shape[:2]
        h, w = fused.shape[2:]
        tokens = self.mix(fused.flatten(2).transpose(1, 2), (h, w))
        return tokens.transpose(1, 2).reshape(b, c, h, w)


class SegmentationHead(nn.Module):
    """Per-pixel linear classifier followed by upsampling to image resolution."""

    def __init__(self, embed_channel: int, n_class: int):
        super().__init__()
        if n_class < 2:
            raise ConfigurationError(f"n_class must be at least 2, got {n_class}")
        self.n_class = n_class
        self.classifier = nn.Conv2d(embed_channel, n_class, kernel_size=1)
        init_module_weights(self)

    def forward(self, features: torch.Tensor, out_hw: tuple[int, int]) -> torch.Tensor:
        h, w = features.shape[2:]
        if out_hw != (4 * h, 4 * w):
            raise ShapeError(f"out_hw {out_hw} must be 4x the feature grid ({h}, {w})")
        logits = self.classifier(features)
        return F.interpolate(logits, size=out_hw, mode="bilinear", align_corners=False)
