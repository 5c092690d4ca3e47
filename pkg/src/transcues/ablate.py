"""Ablation protocols: module toggles and module placement.

Every row trains from scratch with an identical data/seed/budget recipe and
reports validation mIoU; the toggle protocol additionally aggregates a median
over seeds. Results are emitted as machine-readable key=value lines.
"""

from __future__ import annotations

import statistics
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig
from .data import ClassTable, SampleRecord
from .train import Trainer

# (row name, bfe, rfe) in the presentation order: baseline, single modules, both
MODULE_ROWS = (
    ("baseline", False, False),
    ("rfe", False, True),
    ("bfe", True, False),
    ("both", True, True),
)

PLACEMENT_ROWS = ("bfe_then_rfe", "rfe_then_bfe", "parallel")


def _row_config(base: ExperimentConfig, bfe: bool, rfe: bool, seed: int,
                out_dir: Path) -> ExperimentConfig:
    return replace(
        base,
        bfe_enabled=bfe,
        rfe_enabled=rfe,
        beta=base.beta if bfe else 0.0,
        gamma=base.gamma if rfe else 0.0,
        seed=seed,
        out_dir=str(out_dir),
    ).validate()


def run_module_ablation(base_config: ExperimentConfig,
                        train_records: list[SampleRecord],
                        val_records: list[SampleRecord],
                        class_table: ClassTable,
                        seeds=(0, 1, 2),
                        steps: int | None = None) -> dict:
    """Train each toggle row once per seed; report per-seed and median mIoU."""
    steps = steps if steps is not None else base_config.max_steps
    work = Path(base_config.out_dir)
    results: dict[str, dict] = {}
    for row, bfe, rfe in MODULE_ROWS:
        per_seed = {}
        for seed in seeds:
            cfg = _row_config(base_config, bfe, rfe, seed, work / f"{row}_seed{seed}")
            trainer = Trainer(cfg, records=train_records, val_records=val_records,
                              class_table=class_table)
            trainer.train(steps)
            per_seed[seed] = trainer.evaluate(val_records).miou
        results[row] = {"per_seed": per_seed, "median": statistics.median(per_seed.values())}
    return results


def module_ablation_lines(results: dict) -> list[str]:
    lines = []
    for row, _, _ in MODULE_ROWS:
        data = results[row]
        for seed, miou in sorted(data["per_seed"].items()):
            lines.append(f"row={row} seed={seed} miou={miou:.6f}")
        lines.append(f"row={row} miou_median={data['median']:.6f}")
    return lines


def run_placement_ablation(base_config: ExperimentConfig,
                           train_records: list[SampleRecord],
                           val_records: list[SampleRecord] | None,
                           class_table: ClassTable,
                           steps: int = 200) -> dict:
    """Train each placement order for a short budget; report the final losses
    (the desk-scale claim is only that every order trains stably)."""
    work = Path(base_config.out_dir)
    results = {}
    for order in PLACEMENT_ROWS:
        cfg = replace(base_config, bfe_enabled=True, rfe_enabled=True,
                      module_order=order, out_dir=str(work / f"order_{order}")).validate()
        trainer = Trainer(cfg, records=train_records, val_records=val_records,
                          class_table=class_table)
        trainer.train(steps)
        entry = {"final_loss": float(trainer.last_breakdown.total), "steps": trainer.step}
        if val_records:
            entry["miou"] = trainer.evaluate(val_records).miou
        results[order] = entry
    return results


def placement_ablation_lines(results: dict) -> list[str]:
    lines = []
    for order in PLACEMENT_ROWS:
        entry = results[order]
        line = f"order={order} steps={entry['steps']} final_loss={entry['final_loss']:.6f}"
        if "miou" in entry:
            line += f" miou={entry['miou']:.6f}"
        lines.append(line)
    return lines
