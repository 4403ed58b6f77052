"""Random decalibrations and the training samples built from them.

The composition convention is ``H_init = H_gt @ phi``; an estimate ``phi_hat``
is undone with ``H_hat = H_init @ inv(phi_hat)``, which recovers ``H_gt``
exactly when ``phi_hat == phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoding, se3
from .encoding import DecalibRange, DecalibVector
from .projection import CameraIntrinsics, PointCloud, maxpool_densify, mean_adjust, project_points
from .scene import Frame, Rig, generate_scene, make_frame, scene_seed
from .se3 import RigidTransform

DEFAULT_DENSIFY = 5


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_decalib(seed, ranges: DecalibRange) -> RigidTransform:
    """Yaw, pitch, roll uniform in ``[-y_max, y_max]``; tx, ty, tz uniform in ``[-x_max, x_max]``.

    ``seed`` may be anything ``numpy.random.default_rng`` accepts, or a Generator.
    """
    rng = _rng(seed)
    ang = rng.uniform(-ranges.y_max_rad, ranges.y_max_rad, 3)
    t = rng.uniform(-ranges.x_max, ranges.x_max, 3)
    return RigidTransform(se3.euler_to_rotation(*ang), t)


def make_initial(h_gt: RigidTransform, phi: RigidTransform) -> RigidTransform:
    return h_gt @ phi


def residual_decalib(h_init: RigidTransform, h_gt: RigidTransform) -> RigidTransform:
    """The ``phi`` with ``make_initial(h_gt, phi) == h_init``."""
    return se3.invert(h_gt) @ h_init


def apply_estimate(h_current: RigidTransform, phi_hat: RigidTransform) -> RigidTransform:
    return h_current @ se3.invert(phi_hat)


def network_inputs(rgb: np.ndarray, cloud: PointCloud, H: RigidTransform, K: CameraIntrinsics,
                   densify_k: int = DEFAULT_DENSIFY) -> tuple[np.ndarray, np.ndarray]:
    """Mean-adjusted ``3 x H x W`` image and ``1 x H x W`` densified inverse depth."""
    depth = maxpool_densify(project_points(cloud, H, K), densify_k)
    depth_adj, _ = mean_adjust(depth[None])
    rgb_adj, _ = mean_adjust(rgb)
    return rgb_adj, depth_adj


@dataclass
class TrainingSample:
    rgb: np.ndarray
    depth: np.ndarray
    target: DecalibVector
    phi: RigidTransform
    h_init: RigidTransform
    h_gt: RigidTransform


def make_sample(frame: Frame, ranges: DecalibRange, representation: str, seed,
                f: float = encoding.DEFAULT_F, densify_k: int = DEFAULT_DENSIFY) -> TrainingSample:
    """Decalibrate ``frame`` randomly and package the network inputs and target.

    Samples whose projection mostly leaves the image are kept as they are.
    """
    phi = sample_decalib(seed, ranges)
    h_init = make_initial(frame.h_gt, phi)
    rgb, depth = network_inputs(frame.rgb, frame.cloud, h_init, frame.intrinsics, densify_k)
    target = encoding.encode_decalib(phi, representation, ranges, f)
    return TrainingSample(rgb, depth, target, phi, h_init, frame.h_gt)


@dataclass
class SampleStream:
    """Indexable, order-independent source of training samples.

    Sample ``i`` uses scene ``i % n_scenes`` from a lazily built pool and a
    decalibration drawn from ``default_rng([seed, i])``.
    """

    ranges: DecalibRange
    representation: str = encoding.DUAL_QUATERNION
    seed: int = 0
    scene_seed: int = 0
    n_scenes: int = 256
    f: float = encoding.DEFAULT_F
    densify_k: int = DEFAULT_DENSIFY
    rig: Rig = field(default_factory=Rig)
    _frames: dict = field(default_factory=dict, repr=False)

    def frame(self, j: int) -> Frame:
        j = j % self.n_scenes
        if j not in self._frames:
            self._frames[j] = make_frame(generate_scene(scene_seed(self.scene_seed, j), self.rig), self.rig)
        return self._frames[j]

    def __getitem__(self, i: int) -> TrainingSample:
        return make_sample(self.frame(i), self.ranges, self.representation, [self.seed, i],
                           self.f, self.densify_k)

    def take(self, n: int, start: int = 0) -> list[TrainingSample]:
        return [self[i] for i in range(start, start + n)]
