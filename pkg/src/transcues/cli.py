"""Command-line interface: synth | train | eval | predict | gradcheck | ablate.

Every training-like subcommand accepts ``--config FILE`` plus repeated
``--set key=value`` overrides (CLI wins over file).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ablate import (module_ablation_lines, placement_ablation_lines,
                     run_module_ablation, run_placement_ablation)
from .config import resolve_config
from .data import SynthParams, generate_synthetic, load_dataset
from .gradcheck import run_gradcheck
from .train import Trainer, evaluate_model, load_model, predict_image


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (repeatable)")


def _cmd_synth(args) -> int:
    params = SynthParams(n_images=args.n, image_size=args.size, seed=args.seed)
    records = generate_synthetic(params, args.out)
    print(f"wrote {len(records)} scenes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    trainer = Trainer(cfg)
    ckpt = trainer.train()
    print(f"trained {trainer.step} steps; checkpoint at {ckpt}")
    if trainer.val_records:
        report = trainer.evaluate(trainer.val_records)
        print(report.table())
    return 0


def _cmd_eval(args) -> int:
    model, cfg, n_class, _ = load_model(args.checkpoint)
    records, table = load_dataset(args.data)
    if table.n_class != n_class:
        print(f"error: checkpoint has {n_class} classes, dataset has {table.n_class}",
              file=sys.stderr)
        return 2
    report = evaluate_model(model, records, n_class, cfg.resolution)
    print(report.table())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(report.as_lines()) + "\n")
        print(f"report written to {args.out}")
    return 0


def _cmd_predict(args) -> int:
    written = predict_image(args.checkpoint, args.image, args.out)
    for path in written:
        print(path)
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    report = run_gradcheck(cfg, n_params=args.n_params)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def _cmd_ablate(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    train_records, table = load_dataset(cfg.data_root)
    val_records = None
    if cfg.val_root:
        val_records, _ = load_dataset(cfg.val_root)
    if args.protocol == "modules":
        results = run_module_ablation(cfg, train_records, val_records or train_records,
                                      table, seeds=tuple(args.seeds), steps=args.steps)
        lines = module_ablation_lines(results)
    else:
        results = run_placement_ablation(cfg, train_records, val_records, table,
                                         steps=args.steps or 200)
        lines = placement_ablation_lines(results)
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transcues",
                                     description="transparent/reflective object segmentation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="write a key=value report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="export mask/boundary/reflection maps for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_config_args(p)
    p.add_argument("--n-params", type=int, default=10)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("ablate", help="run an ablation protocol")
    _add_config_args(p)
    p.add_argument("--protocol", choices=("modules", "placement"), default="modules")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
