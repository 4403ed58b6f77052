"""Weight initialization."""

from __future__ import annotations

import math

import numpy as np


def fans(shape) -> tuple[int, int]:
    """``(fan_in, fan_out)`` for ``out x in`` matrices and ``out x in x k x k`` kernels."""
    shape = tuple(shape)
    if len(shape) < 2:
        raise ValueError(f"cannot derive fan-in/fan-out from shape {shape}")
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    return shape[1] * receptive, shape[0] * receptive


def xavier_bound(shape) -> float:
    fan_in, fan_out = fans(shape)
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_uniform(shape, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Glorot uniform: ``U(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``."""
    a = xavier_bound(shape)
    return rng.uniform(-a, a, size=shape).astype(dtype)
