"""LiDAR-to-image projection, inverse-depth maps and input normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .se3 import RigidTransform

Z_MIN = 0.1


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in the sensor frame, optionally with intensity in ``[0, 1]``."""

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.size != len(pts):
                raise ValueError("intensity must have one value per point")
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> PointCloud:
        return cls(np.zeros((0, 3)), np.zeros(0))


def camera_coordinates(points: np.ndarray, H: RigidTransform) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Spelled out per component so the float rounding matches scalar evaluation exactly.
    R, t = H.rotation, H.translation
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    xc = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0]
    yc = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1]
    zc = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2]
    return xc, yc, zc


def pixel_coordinates(points: np.ndarray, H: RigidTransform, K: CameraIntrinsics):
    """Pixel indices, inverse depth and an in-image mask for every point."""
    xc, yc, zc = camera_coordinates(points, H)
    front = zc > Z_MIN
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor(K.fx * xc / zc + K.cx + 0.5)
        v = np.floor(K.fy * yc / zc + K.cy + 0.5)
        inv = 1.0 / zc
    ok = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    return u[ok].astype(np.int64), v[ok].astype(np.int64), inv[ok], ok


def project_points(cloud: PointCloud, H: RigidTransform, K: CameraIntrinsics) -> np.ndarray:
    """Sparse inverse-depth image of ``cloud`` seen through extrinsics ``H``.

    Pixels without a return hold 0; when several points hit the same pixel the
    nearest one (largest inverse depth) wins.
    """
    depth = np.zeros(K.shape)
    if len(cloud) == 0:
        return depth
    u, v, inv, _ = pixel_coordinates(cloud.points, H, K)
    np.maximum.at(depth.reshape(-1), v * K.width + u, inv)
    return depth


def maxpool_densify(depth: np.ndarray, k: int = 5) -> np.ndarray:
    """Stride-1, same-size max filter with zero padding at the border."""
    if k < 1 or k % 2 == 0:
        raise ValueError("kernel must be odd")
    if k == 1:
        return np.array(depth, dtype=np.float64, copy=True)
    return ndimage.maximum_filter(np.asarray(depth, dtype=np.float64), size=k, mode="constant", cval=0.0)


def mean_adjust(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the per-channel mean of a ``C x H x W`` image.

    Returns the adjusted copy and the subtracted means.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.size == 0:
        raise ValueError("cannot mean-adjust an empty image")
    means = img.mean(axis=(1, 2))
    return img - means[:, None, None], means
