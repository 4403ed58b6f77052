import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from regnet_calib.se3 import RigidTransform

sys.path.insert(0, str(Path(__file__).resolve().parent))

DATA = Path(__file__).resolve().parent / "data"


def random_transform(rng, max_deg=180.0, max_t=2.0) -> RigidTransform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(0.0, max_deg))
    R = Rotation.from_rotvec(axis * angle).as_matrix()
    return RigidTransform(R, rng.uniform(-max_t, max_t, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("acceptance_support")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.REPORT:
        terminalreporter.write_line(line)
