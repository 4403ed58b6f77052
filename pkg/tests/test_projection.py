import numpy as np
import pytest

from conftest import random_transform
from oracles import maxpool_oracle, zbuffer_oracle
from regnet_calib.projection import (CameraIntrinsics, PointCloud, maxpool_densify, mean_adjust,
                                     project_points)
from regnet_calib.se3 import RigidTransform

K = CameraIntrinsics(fx=50.0, fy=60.0, cx=15.5, cy=9.5, width=32, height=20)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 4, 4)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1.0, 5.0, 1.0, 4, 4)
    assert K.shape == (20, 32)
    np.testing.assert_array_equal(K.K, [[50, 0, 15.5], [0, 60, 9.5], [0, 0, 1]])


def test_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.inf]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), np.zeros(2))
    assert len(PointCloud.empty()) == 0


def test_empty_cloud_gives_zero_map():
    d = project_points(PointCloud.empty(), RigidTransform.identity(), K)
    assert d.shape == (20, 32) and not d.any()


def test_single_point_hand_computed():
    # (0.1, -0.05, 2) -> u = 50 * 0.05 + 15.5 = 18, v = 60 * -0.025 + 9.5 = 8
    d = project_points(PointCloud([[0.1, -0.05, 2.0]]), RigidTransform.identity(), K)
    assert d[8, 18] == 0.5
    assert np.count_nonzero(d) == 1


def test_rounding_half_up():
    # u = 50 * x / 1 + 15.5 lands exactly on 16.5 -> pixel 17
    d = project_points(PointCloud([[0.02, 0.0, 1.0]]), RigidTransform.identity(), K)
    assert d[10, 17] == 1.0


def test_nearest_point_wins():
    pts = [[0.0, 0.0, 4.0], [0.0, 0.0, 2.0], [0.0, 0.0, 8.0]]
    d = project_points(PointCloud(pts), RigidTransform.identity(), K)
    assert d[10, 16] == 0.5


def test_points_behind_near_plane_dropped():
    pts = [[0, 0, 0.1], [0, 0, -3.0], [0, 0, 0.0999]]
    assert not project_points(PointCloud(pts), RigidTransform.identity(), K).any()


def test_off_image_points_dropped():
    pts = [[10.0, 0.0, 1.0], [0.0, -10.0, 1.0]]
    assert not project_points(PointCloud(pts), RigidTransform.identity(), K).any()


def test_matches_zbuffer_oracle(rng):
    for _ in range(30):
        H = random_transform(rng, 30.0, 0.5)
        pts = rng.uniform([-3, -2, -1], [3, 2, 8], size=(300, 3))
        pts[:20] = pts[20:40]  # duplicates exercise the tie path
        got = project_points(PointCloud(pts), H, K)
        ref = zbuffer_oracle(pts, H.rotation, H.translation, K.fx, K.fy, K.cx, K.cy, K.width, K.height)
        np.testing.assert_array_equal(got, ref)


def test_densify_matches_oracle(rng):
    img = np.where(rng.random((13, 17)) < 0.1, rng.random((13, 17)), 0.0)
    for k in (1, 3, 5, 7):
        np.testing.assert_array_equal(maxpool_densify(img, k), maxpool_oracle(img, k))


def test_densify_single_point_footprint():
    img = np.zeros((9, 9))
    img[0, 0] = 2.0
    out = maxpool_densify(img, 5)
    assert out[:3, :3].min() == 2.0 and np.count_nonzero(out) == 9


def test_densify_rejects_even_kernel():
    with pytest.raises(ValueError, match="kernel must be odd"):
        maxpool_densify(np.zeros((4, 4)), 4)


def test_mean_adjust(rng):
    img = rng.random((3, 5, 6))
    adj, means = mean_adjust(img)
    np.testing.assert_allclose(means, img.reshape(3, -1).mean(axis=1))
    np.testing.assert_allclose(adj.reshape(3, -1).mean(axis=1), 0.0, atol=1e-15)
    adj2, _ = mean_adjust(img[0])
    assert adj2.shape == (1, 5, 6)
    with pytest.raises(ValueError):
        mean_adjust(np.zeros((1, 0, 3)))
