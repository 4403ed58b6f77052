"""Central finite-difference checks for every differentiable operation.

The error measure is entrywise relative error with a small floor tied to the
gradient's overall scale, so entries that are exactly zero do not blow up the
ratio::

    err_i = |a_i - n_i| / (max(|a_i|, |n_i|) + 1e-6 * max_j |n_j|)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from .tensor import Tensor

H = 1e-5
LAYER_TOL = 1e-4
MODEL_TOL = 1e-3
# steps tried per entry for the full network, largest first; a step is only used
# if it crosses no ReLU/max-pool kink (small steps lose tiny gradients to roundoff)
MODEL_STEPS = (1e-5, 1e-6, 1e-7, 1e-8)
# fraction of sampled entries that must be kink-free at some step
MIN_CHECKED = 0.75


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tol: float
    skipped: int = 0     # entries left out because every step crossed a kink
    sampled: int = 0

    @property
    def passed(self) -> bool:
        enough = self.sampled == 0 or self.sampled - self.skipped >= MIN_CHECKED * self.sampled
        return bool(self.max_rel_error < self.tol and enough)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f", {self.skipped}/{self.sampled} entries at kinks" if self.sampled else ""
        return f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} (tol {self.tol:g}{extra})"


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    floor = 1e-6 * max(np.max(np.abs(n)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - n) / (np.maximum(np.abs(a), np.abs(n)) + floor)))


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = H, index=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``arr`` (perturbed in place, then restored).

    ``index`` optionally restricts the check to a list of flat positions.
    """
    flat = arr.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(len(positions)) if index is not None else np.zeros(flat.size)
    for k, i in enumerate(positions):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[k] = (fp - fm) / (2 * h)
    return out


def _branch_signature(decisions) -> bytes:
    return b"".join(np.ascontiguousarray(d).tobytes() for d in decisions)


def kink_free_numeric_grad(f: Callable[[], float], arr: np.ndarray, steps=MODEL_STEPS, index=None):
    """Central differences that never straddle a ReLU or max-pool kink.

    Per entry, the largest step in ``steps`` whose two perturbed evaluations make
    the same branch decisions as the unperturbed one is used. Returns the
    estimates and a mask of entries for which every step crossed a kink.
    """
    with F.record_branches() as log:
        f()
    base = _branch_signature(log)
    flat = arr.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(len(positions))
    crossed = np.ones(len(positions), dtype=bool)
    for k, i in enumerate(positions):
        old = flat[i]
        for h in sorted(steps, reverse=True):
            values, smooth = [], True
            for x in (old + h, old - h):
                flat[i] = x
                with F.record_branches() as log:
                    values.append(f())
                smooth = smooth and _branch_signature(log) == base
            flat[i] = old
            if smooth:
                out[k] = (values[0] - values[1]) / (2 * h)
                crossed[k] = False
                break
    return out, crossed


def check_op(name: str, op: Callable[..., Tensor], arrays: list[np.ndarray],
             rng: np.random.Generator, tol: float = LAYER_TOL, h: float = H) -> CheckResult:
    """Compare backward against finite differences for ``sum(w * op(*arrays))``."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]

    def forward(track: bool):
        ts = [Tensor(a, requires_grad=track) for a in arrays]
        return ts, op(*ts)

    ts, out = forward(True)
    probe = rng.standard_normal(out.shape) if out.data.ndim else np.array(1.0)
    out.backward(probe)
    worst = 0.0
    for t, a in zip(ts, arrays):
        f = lambda: float(np.sum(probe * forward(False)[1].data))
        num = numeric_grad(f, a, h)
        ana = t.grad if t.grad is not None else np.zeros_like(a)
        worst = max(worst, relative_error(ana, num))
    return CheckResult(name, worst, tol)


def _distinct(rng, shape, spacing=1e-3) -> np.ndarray:
    """Random values whose pairwise gaps exceed the finite-difference step (no argmax flips)."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2) * spacing * 10 + rng.uniform(0, spacing, n)
    return vals.reshape(shape)


def _away_from_zero(rng, shape, margin=1e-2) -> np.ndarray:
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x)


def layer_suite(seed: int = 0) -> list[CheckResult]:
    """At least five random shapes for every layer type."""
    rng = np.random.default_rng(seed)
    results = []
    conv_cases = [(1, 2, 5, 6, 3, 1, 1), (2, 3, 7, 5, 3, 2, 1), (3, 2, 9, 8, 5, 2, 2),
                  (2, 4, 6, 6, 1, 1, 0), (3, 3, 8, 7, 7, 2, 3), (4, 2, 5, 5, 2, 1, 0)]
    for c_in, c_out, h, w, k, s, p in conv_cases:
        x = rng.standard_normal((c_in, h, w))
        wt = rng.standard_normal((c_out, c_in, k, k))
        b = rng.standard_normal(c_out)
        results.append(check_op(f"conv2d cin={c_in} cout={c_out} {h}x{w} k={k} s={s} p={p}",
                                lambda x, wt, b: F.conv2d(x, wt, b, s, p), [x, wt, b], rng))
    for shape in [(3,), (2, 4, 5), (1, 7, 3), (5, 2, 2), (4, 6)]:
        results.append(check_op(f"relu {shape}", F.relu, [_away_from_zero(rng, shape)], rng))
    for c, h, w, k, s in [(2, 6, 6, 2, 2), (3, 7, 5, 3, 2), (1, 8, 8, 3, 1), (4, 5, 9, 2, 1), (2, 9, 9, 3, 3)]:
        results.append(check_op(f"maxpool2d {c}x{h}x{w} k={k} s={s}",
                                lambda x: F.maxpool2d(x, k, s), [_distinct(rng, (c, h, w))], rng))
    for shape in [(2, 3, 4), (5, 1, 1), (1, 6, 7), (3, 4, 4), (4, 2, 9)]:
        results.append(check_op(f"global_max_pool {shape}", F.global_max_pool, [_distinct(rng, shape)], rng))
    for ca, cb, h, w in [(1, 1, 2, 2), (2, 3, 4, 5), (3, 1, 6, 2), (4, 4, 3, 3), (1, 5, 1, 7)]:
        results.append(check_op(f"concat_channels {ca}+{cb} @ {h}x{w}", F.concat_channels,
                                [rng.standard_normal((ca, h, w)), rng.standard_normal((cb, h, w))], rng))
    for n_in, n_out in [(1, 1), (3, 2), (8, 5), (12, 7), (20, 3)]:
        results.append(check_op(f"fully_connected {n_in}->{n_out}", F.fully_connected,
                                [rng.standard_normal(n_in), rng.standard_normal((n_out, n_in)),
                                 rng.standard_normal(n_out)], rng))
    for n in [1, 2, 6, 7, 8]:
        target = rng.standard_normal(n)
        results.append(check_op(f"euclidean_loss n={n}", lambda p: F.euclidean_loss(p, target),
                                [rng.standard_normal(n)], rng))
    return results


def model_check(seed: int = 0, n_entries: int = 24, config=None, steps=MODEL_STEPS) -> list[CheckResult]:
    """Input-to-loss gradient of a full toy RegNet against finite differences.

    Checks a random subset of the first RGB convolution's weights and of both
    input images, in double precision. Entries whose perturbation flips a ReLU
    or max-pool decision at every tried step are not differentiable there in
    any useful sense; they are counted and left out.
    """
    from ..model import RegNet, RegNetConfig

    rng = np.random.default_rng(seed)
    cfg = config or RegNetConfig()
    model = RegNet(cfg, seed=seed, dtype=np.float64)
    shape = (cfg.input_height, cfg.input_width)
    rgb = rng.standard_normal((3,) + shape)
    depth = rng.standard_normal((1,) + shape)
    target = rng.standard_normal(cfg.output_width) * 0.1

    def loss_value() -> float:
        return float(F.euclidean_loss(model.forward(rgb, depth), target).data)

    model.zero_grad()
    rgb_t, depth_t = Tensor(rgb, requires_grad=True), Tensor(depth, requires_grad=True)
    F.euclidean_loss(model.forward(rgb_t, depth_t), target).backward()

    results = []
    first = model.parameters()[0]
    for label, arr, grad in [("first conv weight", first.data, first.grad),
                             ("rgb input", rgb, rgb_t.grad),
                             ("depth input", depth, depth_t.grad)]:
        idx = rng.choice(arr.size, size=min(n_entries, arr.size), replace=False)
        num, crossed = kink_free_numeric_grad(loss_value, arr, steps, index=list(idx))
        keep = ~crossed
        results.append(CheckResult(f"regnet end-to-end: {label}",
                                   relative_error(grad.reshape(-1)[idx][keep], num[keep]), MODEL_TOL,
                                   int(crossed.sum()), len(idx)))
    return results


def run_all(seed: int = 0, verbose: bool = True, include_model: bool = True) -> bool:
    results = layer_suite(seed) + (model_check(seed) if include_model else [])
    if verbose:
        for r in results:
            print(r)
    return all(r.passed for r in results)
