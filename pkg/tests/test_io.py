import struct

import numpy as np
import pytest
from PIL import Image

from regnet_calib import kitti, storage
from regnet_calib.config import ProjectConfig
from regnet_calib.overlay import colormap, emit_overlay, render_overlay
from regnet_calib.projection import PointCloud, project_points
from regnet_calib.scene import generate_scene, make_frame
from regnet_calib.se3 import EulerPose, euler_to_transform


# -- Velodyne ----------------------------------------------------------------

def test_velodyne_empty_and_two_points(tmp_path):
    p = tmp_path / "e.bin"
    p.write_bytes(b"")
    assert len(kitti.read_velodyne(p)) == 0
    p.write_bytes(struct.pack("<8f", 1, 2, 3, 0.5, -1, -2, -3, 0.25))
    c = kitti.read_velodyne(p)
    np.testing.assert_array_equal(c.points, [[1, 2, 3], [-1, -2, -3]])
    np.testing.assert_array_equal(c.intensity, [0.5, 0.25])


def test_velodyne_roundtrip_bit_exact(tmp_path, rng):
    pts = rng.normal(size=(500, 3)).astype(np.float32).astype(np.float64)
    inten = rng.random(500).astype(np.float32).astype(np.float64)
    kitti.write_velodyne(tmp_path / "c.bin", PointCloud(pts, inten))
    raw = (tmp_path / "c.bin").read_bytes()
    assert len(raw) == 500 * 16
    back = kitti.read_velodyne(tmp_path / "c.bin")
    np.testing.assert_array_equal(back.points, pts)
    np.testing.assert_array_equal(back.intensity, inten)


def test_velodyne_truncated_reports_offset(tmp_path):
    (tmp_path / "t.bin").write_bytes(bytes(16 * 3 + 5))
    with pytest.raises(ValueError, match="byte offset 48"):
        kitti.read_velodyne(tmp_path / "t.bin")


# -- calibration text ----------------------------------------------------------

P2 = np.array([[721.5377, 0.0, 609.5593, 44.85728],
               [0.0, 721.5377, 172.854, 0.2163791],
               [0.0, 0.0, 1.0, 0.002745884]])


def test_identity_calibration(tmp_path):
    P = np.c_[np.diag([500.0, 500.0, 1.0]) + [[0, 0, 600], [0, 0, 180], [0, 0, 0]], np.zeros(3)]
    kitti.write_kitti_calib(tmp_path, np.eye(3), np.zeros(3), P)
    c = kitti.read_kitti_calib(tmp_path)
    np.testing.assert_array_equal(c.extrinsics.matrix, np.eye(4))
    assert (c.intrinsics.fx, c.intrinsics.cx, c.intrinsics.width) == (500.0, 600.0, 1242)


def test_calibration_projection_chain_matches_raw_matrices(tmp_path, rng):
    R = euler_to_transform(EulerPose(0.01, -1.56, 1.58)).rotation
    T = np.array([-0.004, -0.076, -0.272])
    R_rect = euler_to_transform(EulerPose(0.01, -0.005, 0.002)).rotation
    kitti.write_kitti_calib(tmp_path, R, T, P2, R_rect)
    c = kitti.read_kitti_calib(tmp_path)
    pts = rng.uniform([-5, -5, -2], [30, 5, 2], size=(50, 3))
    # raw chain: P_rect @ R_rect @ [R | T]
    Tr = np.eye(4)
    Tr[:3, :3], Tr[:3, 3] = R, T
    Rr = np.eye(4)
    Rr[:3, :3] = R_rect
    proj = (P2 @ Rr @ Tr @ np.c_[pts, np.ones(50)].T).T
    uv_raw = proj[:, :2] / proj[:, 2:]
    cam = c.extrinsics.apply(pts)
    uv = (c.intrinsics.K @ cam.T).T
    uv = uv[:, :2] / uv[:, 2:]
    np.testing.assert_allclose(uv, uv_raw, atol=1e-9)


def test_low_precision_rotation_is_orthonormalized(tmp_path):
    R = np.round(euler_to_transform(EulerPose(0.3, -1.5, 1.6)).rotation, 4)
    kitti.write_kitti_calib(tmp_path, R, np.zeros(3), P2)
    rot = kitti.read_kitti_calib(tmp_path).extrinsics.rotation
    assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-12
    assert np.abs(rot - R).max() < 1e-4


def test_calib_text_roundtrip_lossless(rng):
    entries = {"calib_time": "09-Jan-2012 13:57:47", "R": rng.normal(size=9), "P_rect_02": P2.reshape(-1)}
    back = kitti.parse_calib_text(kitti.format_calib_text(entries))
    assert back["calib_time"] == entries["calib_time"]
    np.testing.assert_array_equal(back["R"], entries["R"])
    np.testing.assert_array_equal(back["P_rect_02"], entries["P_rect_02"])


def test_missing_key_is_named(tmp_path):
    kitti.write_kitti_calib(tmp_path, np.eye(3), np.zeros(3), P2)
    text = (tmp_path / kitti.CAM_FILE).read_text()
    (tmp_path / kitti.CAM_FILE).write_text("\n".join(l for l in text.splitlines() if not l.startswith("R_rect")))
    with pytest.raises(kitti.CalibFormatError, match="'R_rect_00'"):
        kitti.read_kitti_calib(tmp_path)


def test_kitti_frame_paths(tmp_path):
    kitti.write_kitti_calib(tmp_path / "calib", np.eye(3), np.zeros(3), P2)
    drive = tmp_path / "drive"
    (drive / "image_02" / "data").mkdir(parents=True)
    (drive / "velodyne_points" / "data").mkdir(parents=True)
    Image.fromarray(np.full((4, 6, 3), 255, np.uint8)).save(drive / "image_02" / "data" / "0000000003.png")
    kitti.write_velodyne(drive / "velodyne_points" / "data" / "0000000003.bin", PointCloud([[1, 2, 3]], [0.5]))
    rgb, cloud = kitti.kitti_frame(drive, tmp_path / "calib", 3).load()
    assert rgb.shape == (3, 4, 6) and rgb.max() == 1.0
    assert len(cloud) == 1


# -- overlays --------------------------------------------------------------------

def test_overlay_empty_depth_is_input():
    rgb = np.random.default_rng(0).random((3, 8, 10))
    out = render_overlay(rgb, np.zeros((8, 10)))
    np.testing.assert_array_equal(out, np.rint(rgb.transpose(1, 2, 0) * 255).astype(np.uint8))


def test_overlay_single_point_and_marker():
    rgb = np.zeros((3, 9, 9))
    d = np.zeros((9, 9))
    d[4, 4] = 0.5
    out = render_overlay(rgb, d)
    assert np.count_nonzero(out.any(axis=2)) == 1
    np.testing.assert_array_equal(out[4, 4], colormap(1.0))
    assert np.count_nonzero(render_overlay(rgb, d, marker=1).any(axis=2)) == 9
    with pytest.raises(ValueError, match="does not match"):
        render_overlay(rgb, np.zeros((3, 3)))


def test_overlay_files_byte_identical(tmp_path):
    f = make_frame(generate_scene(2))
    d = project_points(f.cloud, f.h_gt, f.intrinsics)
    emit_overlay(f.rgb, d, tmp_path / "a.png")
    emit_overlay(f.rgb, d, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    with pytest.raises(OSError):
        emit_overlay(f.rgb, d, tmp_path / "missing" / "c.png")


def test_colormap_endpoints():
    np.testing.assert_array_equal(colormap(np.array([0.0, 1.0])), [[0, 0, 128], [128, 0, 0]])


# -- config and storage -------------------------------------------------------------

def test_default_config_roundtrip(tmp_path):
    cfg = ProjectConfig()
    cfg.save(tmp_path / "c.json")
    back = ProjectConfig.load(tmp_path / "c.json")
    assert back.dumps() == cfg.dumps()
    assert back.model_config() == cfg.model_config()
    assert [r.y_max for r in back.decalib_ranges()] == [5.0, 2.0]


def test_partial_config_and_unknown_keys():
    cfg = ProjectConfig.from_dict({"training": {"steps": 5}, "filter": {"window": 3}})
    assert cfg.training.steps == 5 and cfg.filter.window == 3 and cfg.training.lr == 1e-4
    with pytest.raises(ValueError, match="unknown keys"):
        ProjectConfig.from_dict({"training": {"stepz": 5}})


def test_config_rig_matches_default_rig():
    from regnet_calib.scene import Rig

    np.testing.assert_allclose(ProjectConfig().scene.rig().h_gt.matrix, Rig().h_gt.matrix, atol=1e-15)


def test_frame_archive_roundtrip(tmp_path):
    f = make_frame(generate_scene(5))
    storage.save_frame(tmp_path / "frame_000000.npz", f)
    g = storage.load_frame(tmp_path / "frame_000000.npz")
    np.testing.assert_array_equal(g.rgb, f.rgb)
    np.testing.assert_array_equal(g.cloud.points, f.cloud.points)
    np.testing.assert_array_equal(g.h_gt.matrix, f.h_gt.matrix)
    assert g.intrinsics == f.intrinsics and g.scene == f.scene
    assert len(storage.load_sequence(tmp_path)) == 1
    with pytest.raises(ValueError, match="no frame"):
        storage.load_sequence(tmp_path / "..")


def test_parse_transform_forms(tmp_path):
    H = euler_to_transform(EulerPose(0.1, 0.2, 0.3, (1, 2, 3)))
    text = storage.format_transform(H)
    np.testing.assert_array_equal(storage.parse_transform(text).matrix, H.matrix)
    (tmp_path / "h.txt").write_text(text)
    np.testing.assert_array_equal(storage.parse_transform(str(tmp_path / "h.txt")).matrix, H.matrix)
    inline = ",".join(repr(float(v)) for v in H.matrix.reshape(-1))
    np.testing.assert_array_equal(storage.parse_transform(inline).matrix, H.matrix)
    with pytest.raises(ValueError, match="12 or 16"):
        storage.parse_transform("1 2 3")
    with pytest.raises(ValueError, match="orthonormal"):
        storage.parse_transform("2 0 0 0 0 1 0 0 0 0 1 0")
    six = " ".join(f"{v:.6f}" for v in H.matrix[:3].reshape(-1))
    assert storage.parse_transform(six).is_valid(1e-12)
