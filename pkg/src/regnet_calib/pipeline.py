"""Inference side: iterative refinement, expert cascades and temporal filtering."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .decalib import DEFAULT_DENSIFY, apply_estimate, network_inputs
from .encoding import DecalibRange
from .metrics import CalibError, evaluate
from .projection import CameraIntrinsics, PointCloud
from .se3 import RigidTransform

MEDIAN = "median"
AVERAGE = "average"


@dataclass
class StageResult:
    ranges: DecalibRange | None
    h: RigidTransform
    error: CalibError | None = None


@dataclass
class CalibrationEstimate:
    h: RigidTransform
    stages: list = field(default_factory=list)

    @property
    def stage_count(self) -> int:
        return len(self.stages)

    def residuals(self) -> list[tuple[float, float]]:
        """``(mean angle deg, mean translation m)`` per stage, when ground truth was given."""
        return [(s.error.mean_angle, s.error.mean_translation) for s in self.stages if s.error]


def refine_once(expert, h_current: RigidTransform, cloud: PointCloud, rgb: np.ndarray,
                K: CameraIntrinsics, h_gt: RigidTransform | None = None,
                densify_k: int = DEFAULT_DENSIFY) -> CalibrationEstimate:
    """Project with ``h_current``, regress the decalibration and undo it.

    An empty projection is not an error: the network then sees an all-zero depth map.
    """
    rgb_in, depth_in = network_inputs(rgb, cloud, h_current, K, densify_k)
    phi_hat = expert.estimate(rgb_in, depth_in, h_current)
    h_new = apply_estimate(h_current, phi_hat)
    err = evaluate(h_new, h_gt) if h_gt is not None else None
    return CalibrationEstimate(h_new, [StageResult(getattr(expert, "ranges", None), h_new, err)])


def cascade(registry, h_init: RigidTransform, cloud: PointCloud, rgb: np.ndarray, K: CameraIntrinsics,
            passes_per_stage: int = 1, h_gt: RigidTransform | None = None,
            densify_k: int = DEFAULT_DENSIFY) -> CalibrationEstimate:
    """Run every expert in ``registry`` (coarse to fine), each ``passes_per_stage`` times."""
    experts = list(registry)
    if not experts:
        raise ValueError("the expert registry is empty")
    h = h_init
    stages = []
    for expert in experts:
        for _ in range(passes_per_stage):
            est = refine_once(expert, h, cloud, rgb, K, h_gt, densify_k)
            h = est.h
            stages.extend(est.stages)
    return CalibrationEstimate(h, stages)


class ExpertRegistry:
    """Experts ordered from the widest decalibration range to the narrowest."""

    def __init__(self, experts):
        self.experts = list(experts)
        for a, b in zip(self.experts, self.experts[1:]):
            if not (b.ranges.x_max < a.ranges.x_max and b.ranges.y_max < a.ranges.y_max):
                raise ValueError(
                    f"expert ranges must strictly decrease: {a.ranges} is followed by {b.ranges}")

    def __iter__(self):
        return iter(self.experts)

    def __len__(self) -> int:
        return len(self.experts)

    def online(self) -> ExpertRegistry:
        """The two finest experts, for small drifts during operation."""
        return ExpertRegistry(self.experts[-2:])


def pose_components(H: RigidTransform) -> np.ndarray:
    yaw, pitch, roll = se3.rotation_to_euler(H.rotation)
    return np.array([yaw, pitch, roll, *H.translation])


def pose_from_components(c) -> RigidTransform:
    return RigidTransform(se3.euler_to_rotation(c[0], c[1], c[2]), c[3:6])


class TemporalFilter:
    """Median or moving average of per-frame estimates over a window of frames.

    Components are the Euler angles and translation of the estimated
    decalibration relative to ``reference`` (the fixed initial calibration);
    they stay far from angle wrap-around, which per-component statistics
    require. ``window=None`` keeps the whole sequence.
    """

    def __init__(self, mode: str = MEDIAN, window: int | None = None,
                 reference: RigidTransform | None = None):
        if mode not in (MEDIAN, AVERAGE):
            raise ValueError(f"mode must be {MEDIAN!r} or {AVERAGE!r}, got {mode!r}")
        if window is not None and window < 1:
            raise ValueError("window must be at least 1")
        self.mode = mode
        self.window = window
        self.reference = reference
        self.history = deque(maxlen=window)

    def update(self, estimate) -> RigidTransform:
        h = estimate.h if isinstance(estimate, CalibrationEstimate) else estimate
        if self.reference is None:
            self.reference = h
        # decalibration phi with h = reference @ inv(phi)
        self.history.append(pose_components(se3.invert(h) @ self.reference))
        return self.value()

    def value(self) -> RigidTransform:
        if not self.history:
            raise ValueError("no frames observed yet")
        hist = np.array(self.history)
        c = np.median(hist, axis=0) if self.mode == MEDIAN else hist.mean(axis=0)
        return apply_estimate(self.reference, pose_from_components(c))


def filter_update(filt: TemporalFilter, estimate) -> RigidTransform:
    return filt.update(estimate)


def sign_test_p(wins: int, losses: int) -> float:
    """One-sided binomial sign test, ties dropped: P(X >= wins | p = 1/2)."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n
