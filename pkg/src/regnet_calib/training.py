"""Single-sample Adam training with loss and validation traces."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoding
from .decalib import TrainingSample, apply_estimate
from .encoding import DecalibRange
from .expert import Expert
from .metrics import CalibError, evaluate, mean_absolute_error
from .model import RegNet
from .nn import functional as F
from .nn.optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverParams:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainResult:
    model: RegNet
    loss_trace: list = field(default_factory=list)   # (step, mean loss over the logging window)
    val_trace: list = field(default_factory=list)    # (step, CalibError of validation MAE)
    steps: int = 0
    seconds: float = 0.0


def loss_and_grad(model: RegNet, sample: TrainingSample) -> float:
    out = model.forward(sample.rgb, sample.depth)
    loss = F.euclidean_loss(out, sample.target.values)
    loss.backward()
    return float(loss.data)


def validate(expert: Expert, samples: list[TrainingSample]) -> CalibError:
    """Mean absolute per-axis error after one refinement step on each held-out sample."""
    errs = []
    for s in samples:
        phi_hat = expert.estimate(s.rgb, s.depth, s.h_init)
        errs.append(evaluate(apply_estimate(s.h_init, phi_hat), s.h_gt))
    return mean_absolute_error(errs)


def _get(samples, i: int) -> TrainingSample:
    if isinstance(samples, (list, tuple)):
        return samples[i % len(samples)]
    return samples[i]


def train(model: RegNet, samples, steps: int, solver: SolverParams = SolverParams(), *,
          log_every: int = 100, val_samples=None, eval_every: int = 0,
          ranges: DecalibRange | None = None, f: float = encoding.DEFAULT_F,
          init_output_bias: bool = True, checkpoint_path=None, optimizer: Adam | None = None,
          start: int = 0) -> TrainResult:
    """Train on ``samples[start], samples[start + 1], ...`` for ``steps`` Adam steps (batch size 1).

    ``samples`` is a list (cycled) or anything indexable by step number. With
    ``init_output_bias`` the last bias starts at the zero-decalibration
    encoding, so the network does not spend its first steps learning the large
    constant ``f`` in the quaternion scalar slot.
    """
    if init_output_bias and start == 0 and optimizer is None:
        model.set_output_bias(encoding.identity_vector(model.config.representation, f))
    opt = optimizer or Adam(model.parameters(), solver.lr, solver.beta1, solver.beta2, solver.eps)
    result = TrainResult(model)
    expert = Expert(model, ranges, f) if ranges is not None else None
    window = []
    t0 = time.perf_counter()
    for step in range(start, start + steps):
        opt.zero_grad()
        loss = loss_and_grad(model, _get(samples, step))
        if not math.isfinite(loss):
            if checkpoint_path is not None and expert is not None:
                expert.save(f"{checkpoint_path}.diverged")
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
        opt.step()
        window.append(loss)
        done = step + 1
        if log_every and done % log_every == 0:
            result.loss_trace.append((done, float(np.mean(window))))
            window = []
        if eval_every and val_samples and expert is not None and done % eval_every == 0:
            mae = validate(expert, val_samples)
            result.val_trace.append((done, mae))
            log.info("step %d loss %.4g val rot MAE %.3f deg", done,
                     result.loss_trace[-1][1] if result.loss_trace else loss, mae.mean_angle)
    if window and log_every:
        result.loss_trace.append((start + steps, float(np.mean(window))))
    result.steps = steps
    result.seconds = time.perf_counter() - t0
    if checkpoint_path is not None and expert is not None:
        expert.save(checkpoint_path)
    return result
