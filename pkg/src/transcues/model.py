"""The composed segmentation network.

encoder -> fusion decoder -> [boundary enhancement] -> [reflection
enhancement] -> per-pixel head. The two enhancement stages can be toggled off
(identity) or re-ordered; "parallel" feeds both the same input and fuses
their outputs through a 1x1 projection. Each component is initialized from
its own seed derived from the experiment seed, so toggling one module never
changes the initial weights of the others.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import torch
import torch.nn as nn

from .backbone import PyramidEncoder, init_module_weights, make_backbone_config
from .boundary import BoundaryEnhancer
from .config import ExperimentConfig
from .decoder import FeatureFusionDecoder, SegmentationHead
from .errors import ConfigurationError
from .reflection import ReflectionEnhancer


@dataclass
class SemanticPrediction:
    logits: torch.Tensor                       # (B, n_class, H, W)
    boundary_logits: torch.Tensor | None       # (B, 1, H/4, W/4) when BFE is on
    reflection_logits: torch.Tensor | None     # (B, 2, H/4, W/4) when RFE is on


def component_seed(base_seed: int, name: str) -> int:
    return (base_seed * 1000003 + zlib.crc32(name.encode())) % (2 ** 31)


class GlassSegmenter(nn.Module):
    def __init__(self, config: ExperimentConfig, n_class: int):
        super().__init__()
        if n_class < 2:
            raise ConfigurationError(f"n_class must be at least 2, got {n_class}")
        self.config = config
        self.n_class = n_class
        backbone_cfg = make_backbone_config(config.backbone, config.embed_channel)
        e = backbone_cfg.embed_channel

        def seeded(name, build):
            torch.manual_seed(component_seed(config.seed, name))
            return build()

        self.encoder = seeded("encoder", lambda: PyramidEncoder(backbone_cfg))
        self.decoder = seeded("decoder", lambda: FeatureFusionDecoder(backbone_cfg))
        self.bfe = seeded("bfe", lambda: BoundaryEnhancer(e)) if config.bfe_enabled else None
        self.rfe = seeded("rfe", lambda: ReflectionEnhancer(e)) if config.rfe_enabled else None
        if config.bfe_enabled and config.rfe_enabled and config.module_order == "parallel":
            self.parallel_fuse = seeded("parallel_fuse", lambda: self._make_parallel_fuse(e))
        else:
            self.parallel_fuse = None
        self.head = seeded("head", lambda: SegmentationHead(e, n_class))

    @staticmethod
    def _make_parallel_fuse(e: int) -> nn.Module:
        proj = nn.Conv2d(2 * e, e, kernel_size=1)
        init_module_weights(proj)
        return proj

    def forward(self, image: torch.Tensor) -> SemanticPrediction:
        pyramid = self.encoder(image)
        fused = self.decoder(pyramid)

        boundary_logits = None
        reflection_logits = None
        feats = fused
        if self.bfe is not None and self.rfe is not None:
            order = self.config.module_order
            if order == "bfe_then_rfe":
                feats, boundary_logits = self.bfe(feats)
                feats, reflection_logits = self.rfe(feats)
            elif order == "rfe_then_bfe":
                feats, reflection_logits = self.rfe(feats)
                feats, boundary_logits = self.bfe(feats)
            else:
                xb, boundary_logits = self.bfe(fused)
                xr, reflection_logits = self.rfe(fused)
                feats = self.parallel_fuse(torch.cat([xb, xr], dim=1))
        elif self.bfe is not None:
            feats, boundary_logits = self.bfe(feats)
        elif self.rfe is not None:
            feats, reflection_logits = self.rfe(feats)

        h, w = image.shape[2:]
        logits = self.head(feats, (h, w))
        return SemanticPrediction(logits=logits, boundary_logits=boundary_logits,
                                  reflection_logits=reflection_logits)


def build_model(config: ExperimentConfig, n_class: int) -> GlassSegmenter:
    config.validate()
    return GlassSegmenter(config, n_class)
