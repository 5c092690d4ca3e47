"""Experiment configuration.

Config files are flat ``key=value`` text with dotted keys; ``#`` starts a
comment. Values given on the command line (``--set key=value``) override file
values. Every run echoes its fully resolved config so it can be replayed
verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigurationError

MODULE_ORDERS = ("bfe_then_rfe", "rfe_then_bfe", "parallel")
BOUNDARY_SUPERVISION_MODES = ("boundary_head", "semantic_foreground")


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {s!r}")


def _parse_id_list(s: str):
    s = s.strip()
    if not s or s.lower() == "auto":
        return None
    return tuple(int(tok) for tok in s.replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    backbone: str = "toy"
    embed_channel: int = 64
    n_class: int | None = None            # None: take it from the dataset class table
    bfe_enabled: bool = True
    rfe_enabled: bool = True
    module_order: str = "bfe_then_rfe"
    boundary_supervision: str = "boundary_head"
    resolution: int = 64
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1
    optim_kind: str = "adamw"
    lr: float = 1e-4
    eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 8
    max_steps: int = 1000
    seed: int = 0
    val_every: int = 100
    log_every: int = 1
    data_root: str = ""
    val_root: str = ""
    reflective_ids: tuple[int, ...] | None = None  # None: take from class table
    flip_prob: float = 0.5
    out_dir: str = "runs/exp"

    def validate(self) -> "ExperimentConfig":
        if self.resolution % 32 != 0:
            raise ConfigurationError(f"resolution must be divisible by 32, got {self.resolution}")
        if self.module_order not in MODULE_ORDERS:
            raise ConfigurationError(
                f"module_order must be one of {MODULE_ORDERS}, got {self.module_order!r}")
        if self.boundary_supervision not in BOUNDARY_SUPERVISION_MODES:
            raise ConfigurationError(
                f"boundary_supervision must be one of {BOUNDARY_SUPERVISION_MODES}")
        if self.n_class is not None and self.n_class < 2:
            raise ConfigurationError(f"n_class must be at least 2, got {self.n_class}")
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"loss.{name} must be >= 0")
        if self.beta > 0 and not self.bfe_enabled:
            raise ConfigurationError("loss.beta > 0 requires model.bfe_enabled=true")
        if self.gamma > 0 and not self.rfe_enabled:
            raise ConfigurationError("loss.gamma > 0 requires model.rfe_enabled=true")
        if self.optim_kind != "adamw":
            raise ConfigurationError(f"unsupported optimizer kind {self.optim_kind!r}")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigurationError("batch_size must be >= 1 and max_steps >= 0")
        return self


# dotted config key -> (dataclass attr, parser)
KEY_MAP = {
    "model.backbone": ("backbone", str),
    "model.embed_channel": ("embed_channel", int),
    "model.n_class": ("n_class", lambda s: None if s.lower() == "auto" else int(s)),
    "model.bfe_enabled": ("bfe_enabled", _parse_bool),
    "model.rfe_enabled": ("rfe_enabled", _parse_bool),
    "model.module_order": ("module_order", str),
    "model.boundary_supervision": ("boundary_supervision", str),
    "loss.alpha": ("alpha", float),
    "loss.beta": ("beta", float),
    "loss.gamma": ("gamma", float),
    "optim.kind": ("optim_kind", str),
    "optim.lr": ("lr", float),
    "optim.eps": ("eps", float),
    "optim.weight_decay": ("weight_decay", float),
    "train.resolution": ("resolution", int),
    "train.batch_size": ("batch_size", int),
    "train.max_steps": ("max_steps", int),
    "train.seed": ("seed", int),
    "train.val_every": ("val_every", int),
    "train.log_every": ("log_every", int),
    "data.root": ("data_root", str),
    "data.val_root": ("val_root", str),
    "data.reflective_ids": ("reflective_ids", _parse_id_list),
    "data.flip_prob": ("flip_prob", float),
    "out.dir": ("out_dir", str),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in KEY_MAP.items()}


def parse_assignments(lines, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into attribute updates."""
    updates = {}
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{ln}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_MAP:
            raise ConfigurationError(f"{source}:{ln}: unknown config key {key!r}")
        attr, parser = KEY_MAP[key]
        try:
            updates[attr] = parser(value)
        except ConfigurationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{ln}: bad value for {key}: {exc}") from exc
    return updates


def resolve_config(config_path: str | Path | None = None,
                   overrides: list[str] | None = None) -> ExperimentConfig:
    """Defaults, then file values, then CLI overrides; validated."""
    cfg = ExperimentConfig()
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        cfg = replace(cfg, **parse_assignments(path.read_text().splitlines(), str(path)))
    if overrides:
        cfg = replace(cfg, **parse_assignments(overrides, "<cli>"))
    return cfg.validate()


def config_lines(cfg: ExperimentConfig) -> list[str]:
    """Serialize in the file format; parsing these lines reproduces cfg."""
    lines = []
    for f in fields(cfg):
        key = _ATTR_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return lines


def write_config_echo(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text("\n".join(config_lines(cfg)) + "\n")
