"""Training, evaluation, checkpointing, and prediction export.

Training is single-threaded and fully seeded: batch sampling and
augmentation draw from one numpy generator whose state travels inside the
checkpoint, so save -> load -> step reproduces the uninterrupted run bitwise
(same hardware and precision). The per-step log and the echoed config are
plain key=value text.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import ExperimentConfig, config_lines, parse_assignments, resolve_config, write_config_echo
from .data import ClassTable, SampleRecord, augment, load_dataset
from .errors import CheckpointError, ConfigurationError, TrainingDiverged
from .losses import LossBreakdown, LossWeights, boundary_loss, reflection_loss, semantic_loss, total_loss
from .metrics import ConfusionAccumulator, EvalReport
from .model import GlassSegmenter, SemanticPrediction, build_model

CHECKPOINT_MAGIC = "TRANSCUES1"


def compute_losses(prediction: SemanticPrediction, gt: torch.Tensor,
                   config: ExperimentConfig, reflective_ids) -> LossBreakdown:
    """All three loss parts; a disabled module contributes an exact zero."""
    weights = LossWeights(alpha=config.alpha, beta=config.beta, gamma=config.gamma)
    zero = torch.zeros((), dtype=prediction.logits.dtype, device=prediction.logits.device)

    semantic = semantic_loss(prediction.logits, gt)

    boundary = zero
    if prediction.boundary_logits is not None:
        if config.boundary_supervision == "boundary_head":
            pred_mask = torch.sigmoid(prediction.boundary_logits)
            if pred_mask.shape[-2:] != gt.shape[-2:]:
                pred_mask = F.interpolate(pred_mask, size=gt.shape[-2:],
                                          mode="bilinear", align_corners=False)
        else:
            pred_mask = 1.0 - prediction.logits.softmax(dim=1)[:, :1]
        gt_binary = (gt > 0).to(pred_mask.dtype).unsqueeze(1)
        boundary = boundary_loss(pred_mask, gt_binary)

    reflection = zero
    if prediction.reflection_logits is not None:
        reflection = reflection_loss(prediction.reflection_logits, gt, reflective_ids)

    return total_loss(semantic, boundary, reflection, weights)


def _to_tensors(records, dtype=torch.float32):
    images = torch.stack([torch.from_numpy(r.image) for r in records]).to(dtype)
    gts = torch.stack([torch.from_numpy(r.semantic_gt) for r in records])
    return images, gts


class Trainer:
    def __init__(self, config: ExperimentConfig,
                 records: list[SampleRecord] | None = None,
                 val_records: list[SampleRecord] | None = None,
                 class_table: ClassTable | None = None):
        config.validate()
        if records is None:
            if not config.data_root:
                raise ConfigurationError("no training data: set data.root or pass records")
            records, table = load_dataset(config.data_root)
            class_table = class_table or table
        if val_records is None and config.val_root:
            val_records, _ = load_dataset(config.val_root)

        self.config = config
        self.records = records
        self.val_records = val_records
        self.n_class = config.n_class if config.n_class is not None else class_table.n_class
        if config.reflective_ids is not None:
            self.reflective_ids = tuple(config.reflective_ids)
        elif class_table is not None:
            self.reflective_ids = tuple(sorted(class_table.reflective_ids))
        else:
            self.reflective_ids = ()

        self.model = build_model(config, self.n_class)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=config.lr,
                                           eps=config.eps, weight_decay=config.weight_decay)
        self.data_rng = np.random.default_rng([config.seed, 0xDA7A])
        self.step = 0
        self.last_breakdown: LossBreakdown | None = None

        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_config_echo(config, self.out_dir / "config.resolved")
        self.log_path = self.out_dir / "train_log.txt"
        self.log_path.write_text("")

    def _log(self, line: str) -> None:
        with self.log_path.open("a") as fh:
            fh.write(line + "\n")

    def _sample_batch(self):
        n = len(self.records)
        idx = self.data_rng.integers(0, n, size=self.config.batch_size)
        seeds = self.data_rng.integers(0, 2 ** 31, size=self.config.batch_size)
        batch = [augment(self.records[i], int(s), out_size=self.config.resolution,
                         flip_prob=self.config.flip_prob)
                 for i, s in zip(idx, seeds)]
        images, gts = _to_tensors(batch)
        return images, gts, [self.records[i].id for i in idx]

    def train_step(self) -> LossBreakdown:
        images, gts, batch_ids = self._sample_batch()
        self.model.train()
        prediction = self.model(images)
        breakdown = compute_losses(prediction, gts, self.config, self.reflective_ids)
        if not math.isfinite(float(breakdown.total.detach())):
            dump = self.out_dir / "diverged_batch.pt"
            torch.save({"step": self.step, "batch_ids": batch_ids,
                        "images": images, "gt": gts}, dump)
            raise TrainingDiverged(
                f"non-finite loss at step {self.step} on batch {batch_ids}; dump at {dump}")
        self.optimizer.zero_grad()
        breakdown.total.backward()
        self.optimizer.step()
        self.step += 1
        self.last_breakdown = breakdown
        return breakdown

    def train(self, max_steps: int | None = None) -> Path:
        target = self.config.max_steps if max_steps is None else max_steps
        while self.step < target:
            breakdown = self.train_step()
            if self.config.log_every and self.step % self.config.log_every == 0:
                parts = " ".join(f"{k}={v:.6f}" for k, v in breakdown.detach_floats().items())
                self._log(f"step={self.step} {parts}")
            if (self.val_records and self.config.val_every
                    and self.step % self.config.val_every == 0):
                report = self.evaluate(self.val_records)
                self._log(f"step={self.step} " +
                          " ".join("val_" + ln for ln in report.as_lines()))
        return self.save_checkpoint()

    def evaluate(self, records: list[SampleRecord] | None = None) -> EvalReport:
        records = records if records is not None else self.records
        return evaluate_model(self.model, records, self.n_class, self.config.resolution)

    def save_checkpoint(self, path: Path | None = None) -> Path:
        path = path or self.out_dir / "checkpoint.pt"
        torch.save({
            "magic": CHECKPOINT_MAGIC,
            "config": config_lines(self.config),
            "n_class": self.n_class,
            "reflective_ids": list(self.reflective_ids),
            "step": self.step,
            "model": self.model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "rng_torch": torch.get_rng_state(),
            "rng_data": self.data_rng.bit_generator.state,
        }, path)
        return Path(path)

    @classmethod
    def restore(cls, path: Path | str,
                records: list[SampleRecord] | None = None,
                val_records: list[SampleRecord] | None = None,
                class_table: ClassTable | None = None) -> "Trainer":
        payload = _load_payload(path)
        cfg = resolve_config(overrides=payload["config"])
        trainer = cls(cfg, records=records, val_records=val_records, class_table=class_table)
        trainer.n_class = payload["n_class"]
        trainer.reflective_ids = tuple(payload["reflective_ids"])
        trainer.model.load_state_dict(payload["model"])
        trainer.optimizer.load_state_dict(payload["optimizer"])
        trainer.step = payload["step"]
        torch.set_rng_state(payload["rng_torch"])
        trainer.data_rng.bit_generator.state = payload["rng_data"]
        return trainer


def _load_payload(path: Path | str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, weights_only=False)
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    return payload


def load_model(path: Path | str) -> tuple[GlassSegmenter, ExperimentConfig, int, tuple[int, ...]]:
    """Rebuild the model from a checkpoint; returns (model, config, n_class, reflective ids)."""
    payload = _load_payload(path)
    cfg = resolve_config(overrides=payload["config"])
    model = build_model(cfg, payload["n_class"])
    model.load_state_dict(payload["model"])
    model.eval()
    return model, cfg, payload["n_class"], tuple(payload["reflective_ids"])


def evaluate_model(model: GlassSegmenter, records: list[SampleRecord],
                   n_class: int, resolution: int) -> EvalReport:
    """Dataset evaluation: global confusion matrix for the semantic metrics,
    per-image foreground probability for the binary metrics."""
    was_training = model.training
    model.eval()
    acc = ConfusionAccumulator(n_class)
    with torch.no_grad():
        for record in records:
            sized = augment(record, seed=0, out_size=resolution, flip_prob=0.0)
            image = torch.from_numpy(sized.image).unsqueeze(0)
            logits = model(image).logits
            if logits.shape[-2:] != record.semantic_gt.shape:
                logits = F.interpolate(logits, size=record.semantic_gt.shape,
                                       mode="bilinear", align_corners=False)
            probs = logits.softmax(dim=1)[0]
            pred = probs.argmax(dim=0).numpy()
            fg_prob = (1.0 - probs[0]).numpy()
            acc.add(pred, record.semantic_gt, fg_prob)
    if was_training:
        model.train()
    return acc.report()


def predict_image(checkpoint: Path | str, image_path: Path | str, out_dir: Path | str) -> list[Path]:
    """Run one image through a checkpointed model and write the semantic mask,
    boundary map, and reflection map as image files."""
    from PIL import Image

    model, cfg, n_class, _ = load_model(checkpoint)
    image_path = Path(image_path)
    try:
        pil = Image.open(image_path).convert("RGB")
    except OSError as exc:
        raise IOError(f"cannot read image {image_path}: {exc}") from exc
    w, h = pil.size
    if h % 32 or w % 32:
        pil = pil.resize((cfg.resolution, cfg.resolution), Image.BILINEAR)
    arr = np.asarray(pil).transpose(2, 0, 1).astype(np.float32) / 255.0
    tensor = torch.from_numpy(arr).unsqueeze(0)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with torch.no_grad():
        pred = model(tensor)
        mask = pred.logits.softmax(dim=1)[0].argmax(dim=0).to(torch.uint8).numpy()
        mask_path = out / f"{image_path.stem}_mask.png"
        Image.fromarray(mask, mode="L").save(mask_path)
        written.append(mask_path)
        if pred.boundary_logits is not None:
            bmap = torch.sigmoid(pred.boundary_logits)[0, 0].numpy()
            bpath = out / f"{image_path.stem}_boundary.png"
            Image.fromarray(np.round(bmap * 255).astype(np.uint8), mode="L").save(bpath)
            written.append(bpath)
        if pred.reflection_logits is not None:
            rmap = pred.reflection_logits.softmax(dim=1)[0, 1].numpy()
            rpath = out / f"{image_path.stem}_reflection.png"
            Image.fromarray(np.round(rmap * 255).astype(np.uint8), mode="L").save(rpath)
            written.append(rpath)
    return written
