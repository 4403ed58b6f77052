"""Per-axis calibration error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import se3
from .se3 import RigidTransform


@dataclass(frozen=True)
class CalibError:
    """Absolute errors of the relative transform ``H_gt^-1 @ H_est``.

    Angles in degrees (yaw, pitch, roll), translations in meters (x, y, z).
    """

    yaw: float
    pitch: float
    roll: float
    x: float
    y: float
    z: float

    @property
    def rotation(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def mean_angle(self) -> float:
        return float(self.rotation.mean())

    @property
    def mean_translation(self) -> float:
        return float(self.translation.mean())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_angle"] = self.mean_angle
        d["mean_translation"] = self.mean_translation
        return d


def evaluate(h_est: RigidTransform, h_gt: RigidTransform) -> CalibError:
    E = se3.invert(h_gt) @ h_est
    yaw, pitch, roll = (abs(math.degrees(a)) for a in se3.rotation_to_euler(E.rotation))
    x, y, z = (abs(float(v)) for v in E.translation)
    return CalibError(yaw, pitch, roll, x, y, z)


def mean_absolute_error(errors: list[CalibError]) -> CalibError:
    a = np.array([[e.yaw, e.pitch, e.roll, e.x, e.y, e.z] for e in errors])
    return CalibError(*(float(v) for v in a.mean(axis=0)))


def zero_predictor_mae(y_max_deg: float) -> float:
    """Expected ``|angle|`` for angles uniform on ``[-y_max, y_max]``."""
    return y_max_deg / 2.0
