"""Rigid transforms and the pose representations used as regression targets.

Conventions
-----------
* Euler angles are intrinsic ZYX: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
* Quaternions are scalar-first ``(w, x, y, z)`` and sign-canonical (``w >= 0``).
* A unit dual quaternion ``p + eps*q`` stores the rotation quaternion ``p`` and
  ``q = 0.5 * (0, t) * p`` (Hamilton product).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GIMBAL_EPS = 1e-7
DEGENERATE_NORM = 1e-6


def _frozen(a, shape) -> np.ndarray:
    a = np.array(a, dtype=np.float64).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Homogeneous rigid motion ``y = R x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, H) -> RigidTransform:
        H = np.asarray(H, dtype=np.float64)
        if H.shape not in ((4, 4), (3, 4)):
            raise ValueError(f"expected a 4x4 or 3x4 matrix, got shape {H.shape}")
        return cls(H[:3, :3], H[:3, 3])

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @property
    def matrix(self) -> np.ndarray:
        H = np.eye(4)
        H[:3, :3] = self.rotation
        H[:3, 3] = self.translation
        return H

    def apply(self, points) -> np.ndarray:
        """Transform an ``(N, 3)`` array (or a single 3-vector) of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        return invert(self)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.all(np.isfinite(R))
            and np.all(np.isfinite(self.translation))
            and np.max(np.abs(R.T @ R - np.eye(3))) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def __repr__(self) -> str:
        rows = np.array2string(self.matrix[:3], precision=6, suppress_small=True)
        return f"RigidTransform(\n{rows})"


@dataclass(frozen=True)
class EulerPose:
    yaw: float
    pitch: float
    roll: float
    translation: tuple = (0.0, 0.0, 0.0)

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll])


@dataclass(frozen=True, eq=False)
class QuatPose:
    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "quaternion", _frozen(self.quaternion, (4,)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))


@dataclass(frozen=True, eq=False)
class DualQuaternion:
    real: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "real", _frozen(self.real, (4,)))
        object.__setattr__(self, "dual", _frozen(self.dual, (4,)))

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.real, self.dual])


def compose(A: RigidTransform, B: RigidTransform) -> RigidTransform:
    """``A @ B``: apply ``B`` first, then ``A``."""
    return RigidTransform(A.rotation @ B.rotation, A.rotation @ B.translation + A.translation)


def invert(H: RigidTransform) -> RigidTransform:
    Rt = H.rotation.T
    return RigidTransform(Rt, -Rt @ H.translation)


# ---------------------------------------------------------------------------
# Euler angles

def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_to_transform(pose: EulerPose) -> RigidTransform:
    return RigidTransform(euler_to_rotation(pose.yaw, pose.pitch, pose.roll), pose.translation)


def _wrap_half_open(a: float) -> float:
    # atan2 may return -pi; the canonical interval is (-pi, pi]
    return math.pi if a <= -math.pi else a


def rotation_to_euler(R) -> tuple[float, float, float]:
    """ZYX decomposition. At gimbal lock roll is pinned to 0 and yaw absorbs the free angle."""
    R = np.asarray(R, dtype=np.float64)
    cos_pitch = math.hypot(R[0, 0], R[1, 0])
    pitch = math.atan2(-R[2, 0], cos_pitch)
    if math.pi / 2 - abs(pitch) < GIMBAL_EPS:
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
    else:
        yaw = math.atan2(R[1, 0], R[0, 0])
        roll = math.atan2(R[2, 1], R[2, 2])
    return _wrap_half_open(yaw), pitch, _wrap_half_open(roll)


def transform_to_euler(H: RigidTransform) -> EulerPose:
    yaw, pitch, roll = rotation_to_euler(H.rotation)
    return EulerPose(yaw, pitch, roll, tuple(float(v) for v in H.translation))


# ---------------------------------------------------------------------------
# Quaternions

def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product of scalar-first quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=np.float64)


def canonical_sign(q) -> np.ndarray:
    """Flip ``q`` so its scalar part is positive (first nonzero entry decides ties)."""
    q = np.asarray(q, dtype=np.float64)
    for v in q:
        if v > 0:
            return q.copy()
        if v < 0:
            return -q
    return q.copy()


def rotation_to_quat(R) -> np.ndarray:
    # Shepperd: branch on the largest of trace and diagonal for stability
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    i = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if i == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif i == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif i == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return canonical_sign(q / np.linalg.norm(q))


def quat_to_rotation(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not n >= DEGENERATE_NORM:
        raise ValueError("degenerate rotation")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def transform_to_quat(H: RigidTransform) -> QuatPose:
    return QuatPose(rotation_to_quat(H.rotation), H.translation)


def quat_to_transform(pose: QuatPose) -> RigidTransform:
    return RigidTransform(quat_to_rotation(pose.quaternion), pose.translation)


# ---------------------------------------------------------------------------
# Dual quaternions

def dualquat_from_transform(H: RigidTransform) -> DualQuaternion:
    p = rotation_to_quat(H.rotation)
    t = np.concatenate([[0.0], H.translation])
    q = 0.5 * quat_multiply(t, p)
    return DualQuaternion(p, q)


def normalize_dualquat(real, dual) -> DualQuaternion:
    """Project an arbitrary 8-vector back onto the unit dual quaternions."""
    p = np.asarray(real, dtype=np.float64)
    q = np.asarray(dual, dtype=np.float64)
    n = np.linalg.norm(p)
    if not n >= DEGENERATE_NORM:
        raise ValueError("degenerate rotation")
    p = p / n
    q = q / n
    q = q - np.dot(p, q) * p
    if p[0] < 0:
        p, q = -p, -q
    return DualQuaternion(p, q)


def transform_from_dualquat(d: DualQuaternion) -> RigidTransform:
    d = normalize_dualquat(d.real, d.dual)
    t = 2.0 * quat_multiply(d.dual, quat_conjugate(d.real))
    return RigidTransform(quat_to_rotation(d.real), t[1:])


# ---------------------------------------------------------------------------
# Misc helpers

def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_angle(R) -> float:
    """Geodesic rotation angle in radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))
