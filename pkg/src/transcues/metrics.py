"""Evaluation metrics: binary IoU, multi-class mIoU, pixel accuracy, MAE,
balance error rate, and the distance-weighted F-measure.

All functions take numpy arrays for single images; dataset-level aggregation
uses a global confusion matrix for mIoU/accuracy and per-image averaging for
the binary foreground metrics. Metrics whose formula divides by zero (BER
without both polarities, F-measure without foreground) return None rather
than a placeholder number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError

FBETA_BETA2 = 0.3
FBETA_SIGMA = 5.0
FBETA_WINDOW = 7
FBETA_BG_DECAY = 5.0


def binary_iou(pred_prob: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of the thresholded prediction against GT.

    Empty-vs-empty counts as a perfect match (1.0).
    """
    p = (np.asarray(pred_prob, dtype=np.float64) >= threshold).astype(np.float64)
    g = np.asarray(gt, dtype=np.float64)
    inter = float((g * p).sum())
    union = float((g + p - g * p).sum())
    if union == 0.0:
        return 1.0
    return inter / union


def multiclass_miou(pred: np.ndarray, gt: np.ndarray, n_class: int):
    """Per-class binary IoU and their mean; classes absent from both masks
    are excluded from the mean."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    for name, arr in (("pred", pred), ("gt", gt)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_class):
            bad = int(arr.min()) if arr.min() < 0 else int(arr.max())
            raise DataError(f"{name} contains class id {bad} outside [0, {n_class})")
    per_class: dict[int, float] = {}
    for c in range(n_class):
        pc = pred == c
        gc = gt == c
        union = int(np.logical_or(pc, gc).sum())
        if union == 0:
            continue
        per_class[c] = int(np.logical_and(pc, gc).sum()) / union
    miou = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return per_class, miou


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    return float((pred == gt).mean())


def mae(pred_prob: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute difference between prediction map and GT mask."""
    p = np.asarray(pred_prob, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    return float(np.abs(p - g).mean())


def ber(pred_binary: np.ndarray, gt: np.ndarray):
    """Balance error rate in percent; None when GT lacks one polarity."""
    p = np.asarray(pred_binary).astype(bool)
    g = np.asarray(gt).astype(bool)
    n_pos = int(g.sum())
    n_neg = int((~g).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    tp = int(np.logical_and(p, g).sum())
    tn = int(np.logical_and(~p, ~g).sum())
    return (1.0 - 0.5 * (tp / n_pos + tn / n_neg)) * 100.0


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _nearest_foreground(fg: np.ndarray, chunk: int = 4096):
    """Distance to and index of the nearest foreground pixel for every pixel.

    Ties go to the lexicographically smallest (row, col) foreground pixel, so
    the result is implementation-independent and reproducible by a plain
    double loop.
    """
    fg_pos = np.argwhere(fg)  # row-major order = lexicographic
    h, w = fg.shape
    dist = np.zeros((h, w), dtype=np.float64)
    nearest = np.zeros((h, w), dtype=np.int64)
    coords = np.argwhere(~fg)
    for start in range(0, len(coords), chunk):
        block = coords[start:start + chunk]
        d2 = ((block[:, None, :] - fg_pos[None, :, :]) ** 2).sum(axis=2)
        idx = d2.argmin(axis=1)  # first minimum wins the tie
        dist[block[:, 0], block[:, 1]] = np.sqrt(d2[np.arange(len(block)), idx])
        nearest[block[:, 0], block[:, 1]] = idx
    return dist, nearest, fg_pos


def weighted_fbeta(pred_prob: np.ndarray, gt: np.ndarray, beta2: float = FBETA_BETA2):
    """Distance-weighted F-measure.

    Errors inside the foreground may be discounted by their Gaussian-smoothed
    neighborhood (dependency correction); background errors are weighted up
    with distance from the foreground. Returns None when GT has no foreground.
    """
    p = np.asarray(pred_prob, dtype=np.float64)
    fg = np.asarray(gt).astype(bool)
    if not fg.any():
        return None
    e = np.abs(p - fg.astype(np.float64))

    dist, nearest, fg_pos = _nearest_foreground(fg)
    et = e.copy()
    bg = ~fg
    src = fg_pos[nearest[bg]]
    et[bg] = e[src[:, 0], src[:, 1]]

    ea = ndimage.correlate(et, _gaussian_kernel(FBETA_WINDOW, FBETA_SIGMA),
                           mode="constant", cval=0.0)
    min_e_ea = np.where(fg & (ea < e), ea, e)

    b = np.ones_like(e)
    b[bg] = 2.0 - np.exp(math.log(0.5) / FBETA_BG_DECAY * dist[bg])
    ew = min_e_ea * b

    n_fg = float(fg.sum())
    tpw = n_fg - float(ew[fg].sum())
    fpw = float(ew[bg].sum())
    recall = 1.0 - float(ew[fg].mean())
    precision = tpw / (tpw + fpw) if tpw + fpw > 0 else 0.0
    denom = beta2 * precision + recall
    if denom <= 0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


@dataclass
class EvalReport:
    per_class_iou: dict[int, float]
    miou: float
    pixel_acc: float
    fbeta_w: float | None
    mae: float
    ber: float | None
    n_images: int = 0
    # dataset-level mIoU comes from one global confusion matrix, not a
    # per-image average; recorded here so reports are self-describing
    aggregation: str = "global-confusion-matrix"

    def as_lines(self) -> list[str]:
        lines = [f"aggregation={self.aggregation}", f"n_images={self.n_images}"]
        for c in sorted(self.per_class_iou):
            lines.append(f"iou_class_{c}={self.per_class_iou[c]:.6f}")
        lines.append(f"miou={self.miou:.6f}")
        lines.append(f"pixel_acc={self.pixel_acc:.6f}")
        lines.append(f"fbeta_w={'nan' if self.fbeta_w is None else f'{self.fbeta_w:.6f}'}")
        lines.append(f"mae={self.mae:.6f}")
        lines.append(f"ber={'nan' if self.ber is None else f'{self.ber:.6f}'}")
        return lines

    def table(self) -> str:
        rows = [("class IoU", " ".join(f"{c}:{v:.3f}" for c, v in sorted(self.per_class_iou.items()))),
                ("mIoU", f"{self.miou:.4f}"),
                ("pixel acc", f"{self.pixel_acc:.4f}"),
                ("F_beta^w", "n/a" if self.fbeta_w is None else f"{self.fbeta_w:.4f}"),
                ("MAE", f"{self.mae:.4f}"),
                ("BER", "n/a" if self.ber is None else f"{self.ber:.4f}")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


@dataclass
class ConfusionAccumulator:
    """Streaming dataset evaluation: global confusion matrix for the semantic
    metrics plus per-image accumulation of the binary foreground metrics."""

    n_class: int
    matrix: np.ndarray = None
    fbeta_values: list = field(default_factory=list)
    mae_values: list = field(default_factory=list)
    ber_values: list = field(default_factory=list)
    n_images: int = 0

    def __post_init__(self):
        if self.matrix is None:
            self.matrix = np.zeros((self.n_class, self.n_class), dtype=np.int64)

    def add(self, pred: np.ndarray, gt: np.ndarray, foreground_prob: np.ndarray | None = None):
        pred = np.asarray(pred).ravel()
        gt = np.asarray(gt).ravel()
        if pred.size and (pred.min() < 0 or pred.max() >= self.n_class):
            raise DataError(f"prediction class id outside [0, {self.n_class})")
        if gt.size and (gt.min() < 0 or gt.max() >= self.n_class):
            raise DataError(f"gt class id outside [0, {self.n_class})")
        idx = gt.astype(np.int64) * self.n_class + pred.astype(np.int64)
        self.matrix += np.bincount(idx, minlength=self.n_class ** 2).reshape(
            self.n_class, self.n_class)
        self.n_images += 1
        if foreground_prob is not None:
            fg_gt = (np.asarray(gt).reshape(foreground_prob.shape) > 0).astype(np.float64)
            self.mae_values.append(mae(foreground_prob, fg_gt))
            fb = weighted_fbeta(foreground_prob, fg_gt)
            if fb is not None:
                self.fbeta_values.append(fb)
            b = ber(foreground_prob >= 0.5, fg_gt)
            if b is not None:
                self.ber_values.append(b)

    def report(self) -> EvalReport:
        diag = np.diag(self.matrix).astype(np.float64)
        gt_count = self.matrix.sum(axis=1)
        pred_count = self.matrix.sum(axis=0)
        union = gt_count + pred_count - diag
        per_class = {c: float(diag[c] / union[c]) for c in range(self.n_class) if union[c] > 0}
        miou = float(np.mean(list(per_class.values()))) if per_class else float("nan")
        total = self.matrix.sum()
        acc = float(diag.sum() / total) if total else float("nan")
        return EvalReport(
            per_class_iou=per_class,
            miou=miou,
            pixel_acc=acc,
            fbeta_w=float(np.mean(self.fbeta_values)) if self.fbeta_values else None,
            mae=float(np.mean(self.mae_values)) if self.mae_values else float("nan"),
            ber=float(np.mean(self.ber_values)) if self.ber_values else None,
            n_images=self.n_images,
        )
