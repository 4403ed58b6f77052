"""Normalized regression targets for a decalibration transform.

Three layouts are supported, named by ``representation``:

``euler``            ``[yaw, pitch, roll] / y_max`` then ``t / x_max`` (6 values)
``quaternion``       ``f * p`` then ``t / x_max`` (7 values)
``dual_quaternion``  ``f * p`` then ``q / x_max`` (8 values)

``p`` is the sign-canonical unit rotation quaternion and ``q`` the dual part.
The balance factor ``f`` keeps the rotational part comparable in magnitude to
the translation part under a Euclidean loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import se3

EULER = "euler"
QUATERNION = "quaternion"
DUAL_QUATERNION = "dual_quaternion"
REPRESENTATIONS = (EULER, QUATERNION, DUAL_QUATERNION)
WIDTHS = {EULER: 6, QUATERNION: 7, DUAL_QUATERNION: 8}

DEFAULT_F = 100.0
_RANGE_TOL = 1e-9


class EncodingRangeError(ValueError):
    pass


@dataclass(frozen=True)
class DecalibRange:
    """Per-axis bounds: translation in meters, rotation in degrees."""

    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max >= 0 and self.y_max >= 0):
            raise ValueError(f"range bounds must be nonnegative, got {self}")
        if not self.y_max < 90:
            raise ValueError("y_max must stay below 90 degrees (Euler gimbal lock)")

    @property
    def y_max_rad(self) -> float:
        return math.radians(self.y_max)

    @classmethod
    def parse(cls, text: str) -> DecalibRange:
        """Parse ``"X,Y"`` (meters, degrees)."""
        try:
            x, y = (float(v) for v in text.split(","))
        except ValueError:
            raise ValueError(f"range must look like 'X,Y' (meters,degrees), got {text!r}") from None
        return cls(x, y)

    def __str__(self) -> str:
        return f"{self.x_max:g}m/{self.y_max:g}deg"


def width(representation: str) -> int:
    try:
        return WIDTHS[representation]
    except KeyError:
        raise ValueError(
            f"unknown representation {representation!r}; expected one of {REPRESENTATIONS}"
        ) from None


@dataclass(frozen=True, eq=False)
class DecalibVector:
    values: np.ndarray
    representation: str

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size != width(self.representation):
            raise ValueError(
                f"{self.representation} vectors have {width(self.representation)} values, got {v.size}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _scale(bound: float) -> float:
    # zero-width ranges encode their (necessarily zero) component as 0
    return bound if bound > 0 else 1.0


def check_in_range(phi: se3.RigidTransform, ranges: DecalibRange) -> None:
    yaw, pitch, roll = se3.rotation_to_euler(phi.rotation)
    ang_lim = ranges.y_max_rad * (1 + _RANGE_TOL) + _RANGE_TOL
    t_lim = ranges.x_max * (1 + _RANGE_TOL) + _RANGE_TOL
    if max(abs(yaw), abs(pitch), abs(roll)) > ang_lim or np.max(np.abs(phi.translation)) > t_lim:
        raise EncodingRangeError("decalibration exceeds encoding range")


def encode_decalib(
    phi: se3.RigidTransform,
    representation: str,
    ranges: DecalibRange,
    f: float = DEFAULT_F,
) -> DecalibVector:
    width(representation)
    check_in_range(phi, ranges)
    t = phi.translation / _scale(ranges.x_max)
    if representation == EULER:
        angles = np.array(se3.rotation_to_euler(phi.rotation)) / _scale(ranges.y_max_rad)
        values = np.concatenate([angles, t])
    elif representation == QUATERNION:
        values = np.concatenate([f * se3.rotation_to_quat(phi.rotation), t])
    else:
        d = se3.dualquat_from_transform(phi)
        values = np.concatenate([f * d.real, d.dual / _scale(ranges.x_max)])
    return DecalibVector(values, representation)


def decode_decalib(v: DecalibVector, ranges: DecalibRange, f: float = DEFAULT_F) -> se3.RigidTransform:
    """Inverse of :func:`encode_decalib`; off-manifold outputs are projected back first."""
    x = v.values
    if not np.all(np.isfinite(x)):
        raise ValueError("decalibration vector has non-finite entries")
    xs = _scale(ranges.x_max)
    if v.representation == EULER:
        yaw, pitch, roll = x[:3] * _scale(ranges.y_max_rad)
        return se3.RigidTransform(se3.euler_to_rotation(yaw, pitch, roll), x[3:6] * xs)
    if v.representation == QUATERNION:
        return se3.RigidTransform(se3.quat_to_rotation(x[:4] / f), x[4:7] * xs)
    d = se3.normalize_dualquat(x[:4] / f, x[4:8] * xs)
    return se3.transform_from_dualquat(d)


def identity_vector(representation: str, f: float = DEFAULT_F) -> np.ndarray:
    """Encoding of the zero decalibration."""
    v = np.zeros(width(representation))
    if representation != EULER:
        v[0] = f
    return v
