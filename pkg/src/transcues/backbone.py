"""Pyramid transformer encoder.

Four stages of patch embedding + transformer layers produce a feature pyramid
at strides 4/8/16/32. Attention keys/values are computed on a grid downsampled
by a per-stage reduction ratio, which keeps early high-resolution stages
affordable. Presets cover the small-to-large backbone family plus a miniature
"toy" variant for fast tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError

VALID_SR_RATIOS = (1, 2, 4, 8)


@dataclass(frozen=True)
class StageConfig:
    """Hyperparameters of one encoder stage."""

    patch_stride: int   # S: stride of the patch embedding
    channels: int       # C: stage output width
    depth: int          # L: number of transformer layers
    sr_ratio: int       # R: key/value spatial reduction ratio
    heads: int          # N: attention heads
    mlp_ratio: int      # E: feed-forward expansion

    def __post_init__(self):
        for name in ("patch_stride", "channels", "depth", "sr_ratio", "heads", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"stage field {name} must be positive, got {getattr(self, name)}")
        if self.channels % self.heads != 0:
            raise ConfigurationError(
                f"channels ({self.channels}) must be divisible by heads ({self.heads})"
            )


@dataclass(frozen=True)
class BackboneConfig:
    """Full backbone description: four stages plus the decoder-facing width."""

    variant_name: str
    stages: tuple[StageConfig, ...]
    embed_channel: int = 64
    overlapping_patches: bool = True
    # Positional embeddings are learned at the grid implied by this square
    # resolution and bilinearly resized to the active grid on every forward.
    pos_embed_resolution: int = 224

    def __post_init__(self):
        if len(self.stages) != 4:
            raise ConfigurationError(f"backbone needs exactly 4 stages, got {len(self.stages)}")
        strides = tuple(s.patch_stride for s in self.stages)
        if strides != (4, 2, 2, 2):
            raise ConfigurationError(f"stage strides must be (4, 2, 2, 2), got {strides}")
        chans = [s.channels for s in self.stages]
        if any(a > b for a, b in zip(chans, chans[1:])):
            raise ConfigurationError(f"stage channels must be nondecreasing, got {chans}")
        if self.embed_channel < 1:
            raise ConfigurationError("embed_channel must be positive")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(s.channels for s in self.stages)


def _stages(C, L, R, N, E, S=(4, 2, 2, 2)):
    return tuple(
        StageConfig(patch_stride=s, channels=c, depth=l, sr_ratio=r, heads=n, mlp_ratio=e)
        for s, c, l, r, n, e in zip(S, C, L, R, N, E)
    )


_C = (64, 128, 320, 512)
_R = (8, 4, 2, 1)
_N = (1, 2, 5, 8)
_E84 = (8, 8, 4, 4)

PRESETS: dict[str, dict] = {
    "pvt1-tiny":   dict(stages=_stages(_C, (2, 2, 2, 2), _R, _N, _E84), overlapping=False),
    "pvt1-small":  dict(stages=_stages(_C, (3, 3, 6, 3), _R, _N, _E84), overlapping=False),
    "pvt1-medium": dict(stages=_stages(_C, (3, 3, 18, 3), _R, _N, _E84), overlapping=False),
    "pvt1-large":  dict(stages=_stages(_C, (3, 8, 27, 3), _R, _N, _E84), overlapping=False),
    "pvt2-b1":     dict(stages=_stages(_C, (2, 2, 2, 2), _R, _N, _E84), overlapping=True),
    "pvt2-b2":     dict(stages=_stages(_C, (3, 3, 6, 3), _R, _N, _E84), overlapping=True),
    "pvt2-b3":     dict(stages=_stages(_C, (3, 3, 18, 3), _R, _N, _E84), overlapping=True),
    "pvt2-b4":     dict(stages=_stages(_C, (3, 8, 27, 3), _R, _N, _E84), overlapping=True),
    "pvt2-b5":     dict(stages=_stages(_C, (3, 6, 40, 3), _R, _N, (4, 4, 4, 4)), overlapping=True),
    "toy":         dict(stages=_stages((8, 16, 32, 64), (1, 1, 1, 1), _R, (1, 2, 4, 8), (2, 2, 2, 2)),
                        overlapping=True),
}


def make_backbone_config(variant_name: str, embed_channel: int = 64) -> BackboneConfig:
    """Look up a backbone preset by name."""
    if variant_name not in PRESETS:
        raise ConfigurationError(
            f"unknown backbone variant {variant_name!r}; valid: {', '.join(sorted(PRESETS))}"
        )
    preset = PRESETS[variant_name]
    return BackboneConfig(
        variant_name=variant_name,
        stages=preset["stages"],
        embed_channel=embed_channel,
        overlapping_patches=preset["overlapping"],
    )


def init_module_weights(module: nn.Module) -> None:
    """Truncated-normal (std 0.02) projections, zero biases, unit norm scales."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.LayerNorm, nn.BatchNorm2d)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class SpatialReductionAttention(nn.Module):
    """Multi-head self-attention with keys/values taken from a grid
    downsampled by ``sr_ratio`` (a strided convolution). ``sr_ratio == 1``
    is plain multi-head self-attention.
    """

    def __init__(self, dim: int, heads: int, sr_ratio: int):
        super().__init__()
        if dim % heads != 0:
            raise ConfigurationError(f"dim ({dim}) must be divisible by heads ({heads})")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.sr_ratio = sr_ratio

        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, dim * 2)
        self.proj = nn.Linear(dim, dim)
        if sr_ratio > 1:
            self.sr = nn.Conv2d(dim, dim, kernel_size=sr_ratio, stride=sr_ratio)
            self.sr_norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, hw: tuple[int, int], return_attn: bool = False):
        """x: (B, h*w, C) tokens on an (h, w) grid."""
        b, n, c = x.shape
        h, w = hw
        if n != h * w:
            raise ShapeError(f"token count {n} does not match grid {h}x{w}")

        q = self.q(x).reshape(b, n, self.heads, self.head_dim).transpose(1, 2)

        if self.sr_ratio > 1:
            grid = x.transpose(1, 2).reshape(b, c, h, w)
            grid = self.sr(grid)
            kv_in = self.sr_norm(grid.flatten(2).transpose(1, 2))
        else:
            kv_in = x
        kv = self.kv(kv_in).reshape(b, -1, 2, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        k, v = kv[0], kv[1]

        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        out = self.proj(out)
        if return_attn:
            return out, attn
        return out


class FeedForward(nn.Module):
    def __init__(self, dim: int, mlp_ratio: int):
        super().__init__()
        hidden = dim * mlp_ratio
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class EncoderLayer(nn.Module):
    """Pre-norm transformer layer: attention + feed-forward, both residual."""

    def __init__(self, dim: int, heads: int, sr_ratio: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SpatialReductionAttention(dim, heads, sr_ratio)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = FeedForward(dim, mlp_ratio)

    def forward(self, x, hw):
        x = x + self.attn(self.norm1(x), hw)
        x = x + self.mlp(self.norm2(x))
        return x


class PatchEmbed(nn.Module):
    """Strided-convolution patch embedding.

    Overlapping variant uses kernel 2S-1 / padding S-1, non-overlapping uses
    kernel S / no padding; both downsample by exactly S.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int, overlapping: bool):
        super().__init__()
        if overlapping:
            self.proj = nn.Conv2d(in_ch, out_ch, kernel_size=2 * stride - 1,
                                  stride=stride, padding=stride - 1)
        else:
            self.proj = nn.Conv2d(in_ch, out_ch, kernel_size=stride, stride=stride)
        self.norm = nn.LayerNorm(out_ch)

    def forward(self, x):
        x = self.proj(x)
        h, w = x.shape[2:]
        x = self.norm(x.flatten(2).transpose(1, 2))
        return x, (h, w)


class EncoderStage(nn.Module):
    def __init__(self, in_ch: int, cfg: StageConfig, overlapping: bool, pos_grid: int):
        super().__init__()
        self.patch_embed = PatchEmbed(in_ch, cfg.channels, cfg.patch_stride, overlapping)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.channels, pos_grid, pos_grid))
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.channels, cfg.heads, cfg.sr_ratio, cfg.mlp_ratio)
            for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.channels)

    def _pos(self, hw):
        pos = self.pos_embed
        if pos.shape[2:] != hw:
            pos = F.interpolate(pos, size=hw, mode="bilinear", align_corners=False)
        return pos.flatten(2).transpose(1, 2)

    def forward(self, x):
        x, hw = self.patch_embed(x)
        x = x + self._pos(hw)
        for layer in self.layers:
            x = layer(x, hw)
        x = self.norm(x)
        b, n, c = x.shape
        return x.transpose(1, 2).reshape(b, c, *hw)


class PyramidEncoder(nn.Module):
    """The full four-stage encoder. ``forward`` returns the feature pyramid
    [C1, C2, C3, C4] at strides 4/8/16/32.
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        stages = []
        in_ch = 3
        stride = 1
        for cfg in config.stages:
            stride *= cfg.patch_stride
            pos_grid = max(1, config.pos_embed_resolution // stride)
            stages.append(EncoderStage(in_ch, cfg, config.overlapping_patches, pos_grid))
            in_ch = cfg.channels
        self.stages = nn.ModuleList(stages)
        init_module_weights(self)
        for stage in self.stages:
            nn.init.trunc_normal_(stage.pos_embed, std=0.02)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) input, got {tuple(image.shape)}")
        h, w = image.shape[2:]
        if h % 32 != 0 or w % 32 != 0:
            raise ShapeError(f"input height and width must be divisible by 32, got {h}x{w}")
        levels = []
        x = image
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return levels


def pyramid_shapes(config: BackboneConfig, batch: int, h: int, w: int) -> list[tuple[int, ...]]:
    """Closed-form output shapes of the pyramid for a given input size."""
    return [
        (batch, c, h // (4 * 2 ** i), w // (4 * 2 ** i))
        for i, c in enumerate(config.channels)
    ]
