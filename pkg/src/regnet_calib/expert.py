"""Regressors that turn network inputs into a decalibration estimate."""

from __future__ import annotations

import logging

import numpy as np

from . import encoding, se3
from .encoding import DecalibRange, DecalibVector
from .model import RegNet, RegNetConfig
from .nn import checkpoint
from .se3 import RigidTransform

log = logging.getLogger(__name__)

FORMAT_TAG = "regnet-expert"


class Expert:
    """A trained network together with the range and scaling it was trained for."""

    def __init__(self, model: RegNet, ranges: DecalibRange, f: float = encoding.DEFAULT_F):
        self.model = model
        self.ranges = ranges
        self.f = f

    @property
    def representation(self) -> str:
        return self.model.config.representation

    def raw(self, rgb, depth) -> np.ndarray:
        return self.model.predict(rgb, depth)

    def estimate(self, rgb, depth, h_current: RigidTransform | None = None) -> RigidTransform:
        """Decoded decalibration for one input pair; ``h_current`` is not used by learned experts."""
        vec = DecalibVector(self.raw(rgb, depth), self.representation)
        try:
            return encoding.decode_decalib(vec, self.ranges, self.f)
        except ValueError as exc:
            log.warning("undecodable network output (%s); keeping the current calibration", exc)
            return RigidTransform.identity()

    def __repr__(self) -> str:
        return f"Expert({self.ranges}, {self.representation})"

    def save(self, path) -> None:
        config = {
            "format": FORMAT_TAG,
            "model": self.model.config.to_dict(),
            "range": [self.ranges.x_max, self.ranges.y_max],
            "f": self.f,
            "seed": self.model.seed,
        }
        checkpoint.save(path, self.model.state_dict(), config)

    @classmethod
    def load(cls, path, dtype=np.float32) -> Expert:
        blobs, config = checkpoint.load(path)
        if config.get("format") != FORMAT_TAG:
            raise checkpoint.CheckpointError(f"{path} is not an expert checkpoint")
        model = RegNet(RegNetConfig.from_dict(config["model"]), seed=config.get("seed", 0), dtype=dtype)
        model.load_state_dict(blobs)
        return cls(model, DecalibRange(*config["range"]), config["f"])


class IdentityExpert:
    """Always predicts zero decalibration."""

    def __init__(self, ranges: DecalibRange | None = None):
        self.ranges = ranges or DecalibRange(0.0, 0.0)

    def estimate(self, rgb, depth, h_current=None) -> RigidTransform:
        return RigidTransform.identity()

    def __repr__(self) -> str:
        return "IdentityExpert()"


class OracleExpert:
    """Knows the ground truth and returns the exact residual decalibration.

    Used to verify the refinement algebra and the evaluation protocol.
    """

    def __init__(self, h_gt: RigidTransform, ranges: DecalibRange | None = None):
        self.h_gt = h_gt
        self.ranges = ranges or DecalibRange(float("inf"), 89.0)

    def estimate(self, rgb, depth, h_current: RigidTransform | None = None) -> RigidTransform:
        if h_current is None:
            raise ValueError("the oracle expert needs the current calibration")
        return se3.invert(self.h_gt) @ h_current

    def __repr__(self) -> str:
        return "OracleExpert()"
