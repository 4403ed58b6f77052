"""Project configuration: one JSON document, every field defaulted.

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import encoding
from .encoding import DecalibRange
from .model import RegNetConfig
from .projection import CameraIntrinsics
from .scene import LidarModel, Rig, default_camera_pose, default_intrinsics
from .se3 import RigidTransform
from .training import SolverParams


@dataclass
class SceneSettings:
    intrinsics: dict = field(default_factory=lambda: asdict(default_intrinsics()))
    camera_yaw_deg: float = 1.0
    camera_pitch_deg: float = 2.0
    camera_translation: list = field(default_factory=lambda: [0.27, -0.30, 1.65])
    lidar: dict = field(default_factory=lambda: LidarModel().to_dict())
    n_scenes: int = 256
    scene_seed: int = 100
    val_scene_seed: int = 555
    n_val_scenes: int = 50

    def rig(self) -> Rig:
        pose = default_camera_pose(self.camera_yaw_deg, self.camera_pitch_deg)
        pose = RigidTransform(pose.rotation, self.camera_translation)
        return Rig(CameraIntrinsics(**self.intrinsics), pose, LidarModel.from_dict(self.lidar))


@dataclass
class TrainingSettings:
    steps: int = 20000
    seed: int = 1
    model_seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    representation: str = encoding.DUAL_QUATERNION
    f: float = encoding.DEFAULT_F
    densify_k: int = 5
    log_every: int = 100
    eval_every: int = 1000
    n_val: int = 200
    val_seed: int = 999
    init_output_bias: bool = True

    def solver(self) -> SolverParams:
        return SolverParams(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class CascadeSettings:
    experts: list = field(default_factory=list)
    passes_per_stage: int = 1


@dataclass
class FilterSettings:
    mode: str = "median"
    window: int | None = None


@dataclass
class EvaluationSettings:
    runs: int = 10
    frames: int = 100
    seed: int = 7
    sequence_seed: int = 900


@dataclass
class ProjectConfig:
    scene: SceneSettings = field(default_factory=SceneSettings)
    model: dict = field(default_factory=lambda: RegNetConfig().to_dict())
    training: TrainingSettings = field(default_factory=TrainingSettings)
    ranges: list = field(default_factory=lambda: [[0.3, 5.0], [0.1, 2.0]])
    cascade: CascadeSettings = field(default_factory=CascadeSettings)
    filter: FilterSettings = field(default_factory=FilterSettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)

    def model_config(self, representation: str | None = None) -> RegNetConfig:
        cfg = RegNetConfig.from_dict(self.model)
        return cfg.with_representation(representation or self.training.representation)

    def decalib_ranges(self) -> list[DecalibRange]:
        return [DecalibRange(float(x), float(y)) for x, y in self.ranges]

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ProjectConfig:
        return _build(cls, d, "config")

    @classmethod
    def load(cls, path=None) -> ProjectConfig:
        if path is None:
            return cls()
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def _build(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    base = cls()
    kwargs = {}
    for name, value in d.items():
        current = getattr(base, name)
        if hasattr(current, "__dataclass_fields__"):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        elif isinstance(current, dict) and isinstance(value, dict):
            kwargs[name] = {**current, **value}
        else:
            kwargs[name] = value
    return cls(**kwargs)


def finite_range(r: DecalibRange) -> bool:
    return math.isfinite(r.x_max) and math.isfinite(r.y_max)
