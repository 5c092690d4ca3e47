"""Training losses: semantic cross-entropy, Sobel-gradient Dice boundary loss,
reflection cross-entropy against reflective pseudo ground truth, and their
weighted sum (default weights 1.0 / 0.1 / 0.1)."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .boundary import gradient_combine, sobel_gradients
from .errors import ConfigurationError, DataError
from .reflection import extract_reflective_pseudo_gt

DICE_SMOOTHING = 1.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0   # semantic
    beta: float = 0.1    # boundary
    gamma: float = 0.1   # reflection

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"loss weight {name} must be >= 0, got {getattr(self, name)}")


@dataclass
class LossBreakdown:
    semantic: torch.Tensor
    boundary: torch.Tensor
    reflection: torch.Tensor
    total: torch.Tensor

    def detach_floats(self) -> dict[str, float]:
        def to_float(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)

        return {
            "loss_semantic": to_float(self.semantic),
            "loss_boundary": to_float(self.boundary),
            "loss_reflection": to_float(self.reflection),
            "loss_total": to_float(self.total),
        }


def semantic_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel softmax cross-entropy. gt holds integer class ids."""
    n_class = logits.shape[1]
    if gt.numel() and (int(gt.min()) < 0 or int(gt.max()) >= n_class):
        bad = int(gt.min()) if int(gt.min()) < 0 else int(gt.max())
        raise DataError(f"class id {bad} out of range [0, {n_class})")
    return F.cross_entropy(logits, gt.long())


def dice_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """1 - Dice similarity over all elements, smoothed to tolerate empty maps."""
    inter = (pred * target).sum()
    total = pred.sum() + target.sum()
    return 1.0 - (2.0 * inter + DICE_SMOOTHING) / (total + DICE_SMOOTHING)


def boundary_loss(pred_mask: torch.Tensor, gt_binary: torch.Tensor) -> torch.Tensor:
    """Dice between the combined Sobel gradient fields of prediction and GT.

    Both inputs are (B, 1, H, W); the prediction is a probability map, the GT
    a binary foreground mask. Constant regions contribute the same floored
    value on both sides, so only boundary structure drives the loss.
    """
    if pred_mask.shape != gt_binary.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_mask.shape)} vs {tuple(gt_binary.shape)}")
    px, py = sobel_gradients(pred_mask)
    gx, gy = sobel_gradients(gt_binary)
    return dice_loss(gradient_combine(px, py), gradient_combine(gx, gy))


def reflection_loss(reflection_logits: torch.Tensor, semantic_gt: torch.Tensor,
                    reflective_class_ids) -> torch.Tensor:
    """Two-class cross-entropy against the reflective pseudo ground truth.

    Logits are bilinearly upsampled to the GT resolution when they differ.
    """
    gt_hw = semantic_gt.shape[-2:]
    if reflection_logits.shape[-2:] != gt_hw:
        reflection_logits = F.interpolate(reflection_logits, size=gt_hw,
                                          mode="bilinear", align_corners=False)
    pseudo = extract_reflective_pseudo_gt(semantic_gt, reflective_class_ids)
    return F.cross_entropy(reflection_logits, pseudo.long())


def total_loss(semantic, boundary, reflection, weights: LossWeights) -> LossBreakdown:
    total = weights.alpha * semantic + weights.beta * boundary + weights.gamma * reflection
    return LossBreakdown(semantic=semantic, boundary=boundary, reflection=reflection, total=total)
