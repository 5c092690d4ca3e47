"""Finite-difference verification of the full loss gradient.

Builds the model in float64, computes the total training loss on a fixed
synthetic batch, and compares autograd gradients against central differences
for a random sample of parameters. Any analytic/numeric disagreement above
the tolerance names the offending parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import ExperimentConfig
from . import train as train_mod
from .model import build_model

DEFAULT_RTOL = 1e-3
DEFAULT_ATOL = 1e-9


@dataclass
class GradcheckEntry:
    parameter: str
    index: int
    analytic: float
    numeric: float
    rel_error: float
    ok: bool

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return (f"param={self.parameter}[{self.index}] analytic={self.analytic:.6e} "
                f"numeric={self.numeric:.6e} rel_error={self.rel_error:.3e} status={status}")


@dataclass
class GradcheckReport:
    entries: list[GradcheckEntry]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def lines(self) -> list[str]:
        return [e.line() for e in self.entries] + [
            f"gradcheck={'pass' if self.ok else 'fail'}"]


def _synthetic_batch(n_class: int, resolution: int, seed: int):
    rng = np.random.default_rng([seed, 0x97AD])
    images = torch.from_numpy(rng.uniform(0, 1, size=(2, 3, resolution, resolution)))
    gt = torch.from_numpy(rng.integers(0, n_class, size=(2, resolution, resolution)))
    return images.to(torch.float64), gt


def run_gradcheck(config: ExperimentConfig, n_class: int = 3,
                  reflective_ids=(2,), n_params: int = 10,
                  rtol: float = DEFAULT_RTOL, seed: int = 0) -> GradcheckReport:
    config.validate()
    images, gt = _synthetic_batch(n_class, config.resolution, seed)
    model = build_model(config, n_class).double()
    model.eval()  # freeze batch-norm statistics so the loss is a pure function of parameters

    def loss_value() -> torch.Tensor:
        breakdown = train_mod.compute_losses(model(images), gt, config, reflective_ids)
        return breakdown.total

    loss = loss_value()
    model.zero_grad()
    loss.backward()

    named = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    rng = np.random.default_rng([seed, 0x6AD])
    entries = []
    for _ in range(n_params):
        name, param = named[int(rng.integers(0, len(named)))]
        flat = param.detach().reshape(-1)
        idx = int(rng.integers(0, flat.numel()))
        analytic = float(param.grad.reshape(-1)[idx])

        h = 1e-6 * max(1.0, abs(float(flat[idx])))
        with torch.no_grad():
            original = float(flat[idx])
            flat[idx] = original + h
            f_plus = float(loss_value())
            flat[idx] = original - h
            f_minus = float(loss_value())
            flat[idx] = original
        numeric = (f_plus - f_minus) / (2.0 * h)

        scale = max(abs(analytic), abs(numeric))
        if scale < DEFAULT_ATOL:
            rel = 0.0
        else:
            rel = abs(analytic - numeric) / scale
        entries.append(GradcheckEntry(parameter=name, index=idx, analytic=analytic,
                                      numeric=numeric, rel_error=rel, ok=rel <= rtol))
    return GradcheckReport(entries=entries)
