"""Procedural street-like scenes, a spinning-LiDAR simulator and a camera renderer.

World frame: x forward, y left, z up, ground at ``z = 0``. Camera frames follow
the usual x right / y down / z forward convention. Everything is ray cast, so
rendered depth and LiDAR returns share one exact geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import se3
from .projection import CameraIntrinsics, PointCloud
from .se3 import RigidTransform

BOUNDS_LO = np.array([-20.0, -20.0, 0.0])
BOUNDS_HI = np.array([20.0, 20.0, 10.0])
BACKGROUND = (0.55, 0.65, 0.85)
LIGHT_DIR = (-0.45, 0.35, 0.82)
AMBIENT = 0.3
MIN_VISIBLE = 3
MAX_RETRIES = 100
_EPS = 1e-9

# camera axes expressed in the world frame (columns: x right, y down, z forward)
CAMERA_AXES = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with one albedo per face (-x, +x, -y, +y, -z, +z)."""

    lo: tuple
    hi: tuple
    color: tuple = (1.0, 1.0, 1.0)
    face_albedo: tuple = (1.0,) * 6


@dataclass(frozen=True)
class GroundPlane:
    """Finite horizontal rectangle with a two-tone checker texture."""

    height: float = 0.0
    extent: float = 20.0
    albedo: tuple = (0.35, 0.45)
    cell: float = 2.0
    color: tuple = (0.8, 0.8, 0.75)


@dataclass(frozen=True)
class Scene:
    boxes: tuple = ()
    ground: GroundPlane | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ground": None if self.ground is None else asdict(self.ground),
            "boxes": [asdict(b) for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scene:
        ground = d.get("ground")
        return cls(
            boxes=tuple(Box(**{k: tuple(v) if isinstance(v, list) else v for k, v in b.items()})
                        for b in d.get("boxes", [])),
            ground=None if ground is None else GroundPlane(
                **{k: tuple(v) if isinstance(v, list) else v for k, v in ground.items()}),
            seed=d.get("seed"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class LidarModel:
    n_layers: int = 16
    elevation_min: float = -16.0
    elevation_max: float = 4.0
    azimuth_step: float = 0.5
    max_range: float = 40.0
    pose: RigidTransform = field(default_factory=lambda: RigidTransform.from_translation((0.0, 0.0, 1.73)))
    range_noise: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.n_layers < 4:
            raise ValueError("a LiDAR model needs at least 4 layers")
        if not self.max_range > 1.0:
            raise ValueError("max_range must exceed 1 m")

    def directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, layer-major."""
        elev = np.radians(np.linspace(self.elevation_min, self.elevation_max, self.n_layers))
        n_az = int(round(360.0 / self.azimuth_step))
        az = np.radians(np.arange(n_az) * self.azimuth_step - 180.0)
        e, a = np.meshgrid(elev, az, indexing="ij")
        d = np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1)
        return d.reshape(-1, 3)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("n_layers", "elevation_min", "elevation_max", "azimuth_step", "max_range",
              "range_noise", "noise_seed")}
        d["pose"] = self.pose.matrix[:3].tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LidarModel:
        d = dict(d)
        if "pose" in d:
            d["pose"] = RigidTransform.from_matrix(d["pose"])
        return cls(**d)


def default_camera_pose(yaw_deg: float = 1.0, pitch_deg: float = 2.0) -> RigidTransform:
    """Camera 0.3 m right of the LiDAR, slightly lower and ahead, tilted a little down."""
    tilt = se3.euler_to_rotation(math.radians(yaw_deg), math.radians(pitch_deg), 0.0)
    return RigidTransform(tilt @ CAMERA_AXES, (0.27, -0.30, 1.65))


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=128.0, fy=128.0, cx=127.5, cy=47.5, width=256, height=96)


@dataclass(frozen=True)
class Rig:
    """Camera and LiDAR mounted on the vehicle; ``h_gt`` maps LiDAR to camera coordinates."""

    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    camera_pose: RigidTransform = field(default_factory=default_camera_pose)
    lidar: LidarModel = field(default_factory=LidarModel)

    @property
    def h_gt(self) -> RigidTransform:
        return se3.invert(self.camera_pose) @ self.lidar.pose


# ---------------------------------------------------------------------------
# Ray casting

@dataclass
class Hits:
    t: np.ndarray        # ray parameter, inf where nothing was hit
    prim: np.ndarray     # primitive index (-1 none, 0 ground, 1 + i for box i)
    normal: np.ndarray
    albedo: np.ndarray
    color: np.ndarray


def _intersect_box(o: np.ndarray, d: np.ndarray, box: Box):
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    tnear = np.fmin(t1, t2)
    tfar = np.fmax(t1, t2)
    t_enter = np.nanmax(np.where(np.isnan(tnear), -np.inf, tnear), axis=1)
    t_exit = np.nanmin(np.where(np.isnan(tfar), np.inf, tfar), axis=1)
    hit = (t_enter <= t_exit) & (t_enter > _EPS)
    axis = np.argmax(np.where(np.isnan(tnear), -np.inf, tnear), axis=1)
    return np.where(hit, t_enter, np.inf), axis


def _intersect_ground(o: np.ndarray, d: np.ndarray, g: GroundPlane):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (g.height - o[:, 2]) / d[:, 2]
    t = np.where((d[:, 2] != 0) & (t > _EPS), t, np.inf)
    with np.errstate(invalid="ignore"):
        px = o[:, 0] + t * d[:, 0]
        py = o[:, 1] + t * d[:, 1]
        inside = (np.abs(px) <= g.extent) & (np.abs(py) <= g.extent)
    return np.where(inside, t, np.inf), px, py


def cast_rays(scene: Scene, origins, dirs) -> Hits:
    """Nearest intersection of each ray with the scene (vectorized over rays)."""
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    o = np.broadcast_to(np.asarray(origins, dtype=np.float64), d.shape)
    n = len(d)
    best = np.full(n, np.inf)
    prim = np.full(n, -1, dtype=np.int64)
    normal = np.zeros((n, 3))
    albedo = np.zeros(n)
    color = np.zeros((n, 3))
    if scene.ground is not None:
        g = scene.ground
        t, px, py = _intersect_ground(o, d, g)
        m = t < best
        best[m] = t[m]
        prim[m] = 0
        normal[m] = (0.0, 0.0, 1.0)
        checker = (np.floor(px[m] / g.cell) + np.floor(py[m] / g.cell)).astype(np.int64) % 2
        albedo[m] = np.asarray(g.albedo)[checker]
        color[m] = g.color
    for i, box in enumerate(scene.boxes):
        t, axis = _intersect_box(o, d, box)
        m = t < best
        if not np.any(m):
            continue
        best[m] = t[m]
        prim[m] = i + 1
        ax = axis[m]
        sign = np.where(d[m, ax] > 0, -1.0, 1.0)
        nm = np.zeros((int(m.sum()), 3))
        nm[np.arange(len(ax)), ax] = sign
        normal[m] = nm
        face = 2 * ax + (sign > 0)
        albedo[m] = np.asarray(box.face_albedo)[face]
        color[m] = box.color
    return Hits(best, prim, normal, albedo, color)


def simulate_lidar(scene: Scene, model: LidarModel) -> PointCloud:
    """One spin of the scanner; points are returned in the sensor frame."""
    d_sensor = model.directions()
    d_world = d_sensor @ model.pose.rotation.T
    hits = cast_rays(scene, model.pose.translation, d_world)
    r = hits.t
    if model.range_noise > 0:
        rng = np.random.default_rng(model.noise_seed)
        r = r + rng.normal(0.0, model.range_noise, size=r.shape)
    keep = np.isfinite(hits.t) & (r <= model.max_range) & (r > 0)
    pts = d_sensor[keep] * r[keep, None]
    return PointCloud(pts, hits.albedo[keep])


@dataclass
class Render:
    rgb: np.ndarray      # 3 x H x W in [0, 1]
    depth: np.ndarray    # H x W camera-frame z, 0 where nothing was hit
    ids: np.ndarray      # H x W primitive index, -1 for background


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame directions through pixel centers, scaled to unit z."""
    v, u = np.mgrid[0:K.height, 0:K.width].astype(np.float64)
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)


def shade(hits: Hits, light=LIGHT_DIR, ambient: float = AMBIENT, background=BACKGROUND) -> np.ndarray:
    light = np.asarray(light, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lam = np.clip(hits.normal @ light, 0.0, None)
    value = hits.albedo * (ambient + (1.0 - ambient) * lam)
    rgb = hits.color * value[:, None]
    rgb[hits.prim < 0] = background
    return rgb


def render_camera(scene: Scene, pose: RigidTransform, K: CameraIntrinsics,
                  light=LIGHT_DIR, ambient: float = AMBIENT) -> Render:
    """Lambert-shaded image plus exact z-depth; ``pose`` maps camera to world coordinates."""
    d_cam = pixel_rays(K)
    hits = cast_rays(scene, pose.translation, d_cam @ pose.rotation.T)
    rgb = shade(hits, light, ambient).reshape(K.height, K.width, 3).transpose(2, 0, 1)
    depth = np.where(np.isfinite(hits.t), hits.t, 0.0).reshape(K.shape)
    return Render(np.ascontiguousarray(rgb), depth, hits.prim.reshape(K.shape))


# ---------------------------------------------------------------------------
# Scene generation

def _random_scene(rng: np.random.Generator, seed) -> Scene:
    boxes = []
    for _ in range(int(rng.integers(6, 13))):
        size = rng.uniform([0.5, 0.5, 0.6], [4.0, 4.0, 4.0])
        cx = rng.uniform(3.0 + size[0] / 2, 19.0 - size[0] / 2)
        cy = rng.uniform(-12.0, 12.0)
        lo = (cx - size[0] / 2, cy - size[1] / 2, 0.0)
        hi = (cx + size[0] / 2, cy + size[1] / 2, size[2])
        boxes.append(_make_box(rng, lo, hi))
    for _ in range(int(rng.integers(1, 4))):
        # building facades along the far edge or the sides
        if rng.random() < 0.5:
            x0 = rng.uniform(15.0, 18.5)
            y0 = rng.uniform(-16.0, 10.0)
            lo = (x0, y0, 0.0)
            hi = (x0 + 1.0, min(y0 + rng.uniform(4.0, 10.0), 20.0), rng.uniform(3.0, 8.0))
        else:
            side = rng.choice([-1.0, 1.0])
            y0 = side * rng.uniform(9.0, 14.0)
            x0 = rng.uniform(2.0, 12.0)
            lo = (x0, min(y0, y0 + side), 0.0)
            hi = (min(x0 + rng.uniform(4.0, 8.0), 20.0), max(y0, y0 + side), rng.uniform(3.0, 8.0))
        boxes.append(_make_box(rng, lo, hi))
    a = rng.uniform(0.25, 0.45)
    ground = GroundPlane(albedo=(round(a, 6), round(a + rng.uniform(0.05, 0.15), 6)))
    return Scene(tuple(boxes), ground, seed)


def _make_box(rng: np.random.Generator, lo, hi) -> Box:
    r = lambda v: tuple(round(float(x), 6) for x in v)
    return Box(
        lo=r(lo),
        hi=r(hi),
        color=r(rng.uniform(0.25, 1.0, 3)),
        face_albedo=r(rng.uniform(0.5, 1.0, 6)),
    )


def visible_primitives(scene: Scene, rig: Rig) -> int:
    """Number of boxes that cover at least one pixel of the rig's camera."""
    ids = render_camera(scene, rig.camera_pose, rig.intrinsics).ids
    return len(set(np.unique(ids).tolist()) - {-1, 0})


def in_bounds(scene: Scene) -> bool:
    return all(np.all(np.asarray(b.lo) >= BOUNDS_LO) and np.all(np.asarray(b.hi) <= BOUNDS_HI)
               for b in scene.boxes)


def generate_scene(seed: int, rig: Rig | None = None) -> Scene:
    """Deterministic random scene with at least three boxes in view of the camera."""
    rig = rig or Rig()
    for attempt in range(MAX_RETRIES + 1):
        rng = np.random.default_rng([seed, attempt] if attempt else seed)
        scene = _random_scene(rng, seed)
        if in_bounds(scene) and visible_primitives(scene, rig) >= MIN_VISIBLE:
            return scene
    raise RuntimeError("degenerate scene configuration")


@dataclass
class Frame:
    """Everything the calibration pipeline sees for one time step."""

    rgb: np.ndarray
    cloud: PointCloud
    depth_ref: np.ndarray
    intrinsics: CameraIntrinsics
    h_gt: RigidTransform
    scene: Scene | None = None


def make_frame(scene: Scene, rig: Rig | None = None) -> Frame:
    rig = rig or Rig()
    render = render_camera(scene, rig.camera_pose, rig.intrinsics)
    cloud = simulate_lidar(scene, rig.lidar)
    return Frame(render.rgb, cloud, render.depth, rig.intrinsics, rig.h_gt, scene)


def scene_seed(base: int, index: int) -> int:
    """Stable per-index scene seed derived from a base seed."""
    return int(np.random.default_rng([base, index]).integers(0, 2**31 - 1))
