"""Readers and writers for KITTI-raw Velodyne scans and calibration files.

Velodyne scans are flat arrays of little-endian float32 records ``(x, y, z,
reflectance)``, 16 bytes per point.

Calibration is read from ``calib_velo_to_cam.txt`` (``R``, ``T``) and
``calib_cam_to_cam.txt`` (``R_rect_00``, ``P_rect_0i``, ``S_rect_0i``). The
rectified projection ``P = K [I | b]`` is split into intrinsics ``K`` and a
translation ``b = K^-1 P[:, 3]``, which is folded into the extrinsics::

    H = [I | b] @ R_rect_00 @ [R | T]

so that ``z (u, v, 1) = K H x`` matches ``P R_rect_00 [R | T] x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .projection import CameraIntrinsics, PointCloud
from .se3 import RigidTransform, orthonormalize

VELO_FILE = "calib_velo_to_cam.txt"
CAM_FILE = "calib_cam_to_cam.txt"
_RECORD = np.dtype("<f4")


class CalibFormatError(ValueError):
    pass


def read_velodyne(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        whole = len(raw) // 16 * 16
        raise ValueError(f"{path}: truncated Velodyne record at byte offset {whole} "
                         f"(file length {len(raw)} is not a multiple of 16)")
    data = np.frombuffer(raw, dtype=_RECORD).reshape(-1, 4)
    return PointCloud(data[:, :3].astype(np.float64), data[:, 3].astype(np.float64))


def write_velodyne(path, cloud: PointCloud) -> None:
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    rec = np.column_stack([cloud.points, inten]).astype(_RECORD)
    Path(path).write_bytes(rec.tobytes())


def parse_calib_text(text: str) -> dict:
    """``key: v1 v2 ...`` lines to a dict of float arrays (non-numeric values stay strings)."""
    out = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, value = line.split(":", 1)
        try:
            out[key.strip()] = np.array([float(v) for v in value.split()])
        except ValueError:
            out[key.strip()] = value.strip()
    return out


def format_calib_text(entries: dict) -> str:
    lines = []
    for key, value in entries.items():
        if isinstance(value, str):
            lines.append(f"{key}: {value}")
        else:
            lines.append(f"{key}: " + " ".join(repr(float(v)) for v in np.asarray(value).reshape(-1)))
    return "\n".join(lines) + "\n"


def _need(d: dict, key: str, size: int, source) -> np.ndarray:
    if key not in d:
        raise CalibFormatError(f"{source}: missing key {key!r}")
    v = d[key]
    if isinstance(v, str) or v.size != size:
        raise CalibFormatError(f"{source}: key {key!r} must hold {size} numbers")
    return v


@dataclass
class KittiCalib:
    intrinsics: CameraIntrinsics
    extrinsics: RigidTransform       # Velodyne -> rectified camera i, projection offset folded in
    raw_velo: dict
    raw_cam: dict


def read_kitti_calib(path, camera: int = 2) -> KittiCalib:
    """Parse a KITTI-raw calibration directory for camera ``camera`` (2 = left color)."""
    root = Path(path)
    velo_path, cam_path = root / VELO_FILE, root / CAM_FILE
    velo = parse_calib_text(velo_path.read_text())
    cam = parse_calib_text(cam_path.read_text())
    R = _need(velo, "R", 9, velo_path).reshape(3, 3)
    T = _need(velo, "T", 3, velo_path)
    R_rect = _need(cam, "R_rect_00", 9, cam_path).reshape(3, 3)
    P = _need(cam, f"P_rect_{camera:02d}", 12, cam_path).reshape(3, 4)
    S = _need(cam, f"S_rect_{camera:02d}", 2, cam_path)

    K = P[:, :3]
    b = np.linalg.solve(K, P[:, 3])
    rot = orthonormalize(R_rect @ R)
    trans = R_rect @ T + b
    intr = CameraIntrinsics(fx=K[0, 0], fy=K[1, 1], cx=K[0, 2], cy=K[1, 2],
                            width=int(round(S[0])), height=int(round(S[1])))
    return KittiCalib(intr, RigidTransform(rot, trans), velo, cam)


def write_kitti_calib(path, R, T, P_rect, R_rect=None, size=(1242, 375), camera: int = 2,
                      calib_time: str = "01-Jan-2000 00:00:00") -> None:
    """Write a minimal calibration directory readable by :func:`read_kitti_calib`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    R_rect = np.eye(3) if R_rect is None else R_rect
    velo = {"calib_time": calib_time, "R": np.asarray(R).reshape(-1), "T": np.asarray(T).reshape(-1)}
    cam = {
        "calib_time": calib_time,
        "R_rect_00": np.asarray(R_rect).reshape(-1),
        f"S_rect_{camera:02d}": np.asarray(size, dtype=float),
        f"P_rect_{camera:02d}": np.asarray(P_rect).reshape(-1),
    }
    (root / VELO_FILE).write_text(format_calib_text(velo))
    (root / CAM_FILE).write_text(format_calib_text(cam))


@dataclass
class KittiFrame:
    image_path: Path
    velodyne_path: Path
    calib: KittiCalib

    def load(self) -> tuple[np.ndarray, PointCloud]:
        """``3 x H x W`` float image in ``[0, 1]`` and the Velodyne cloud."""
        from PIL import Image

        img = np.asarray(Image.open(self.image_path).convert("RGB"), dtype=np.float64) / 255.0
        return img.transpose(2, 0, 1).copy(), read_velodyne(self.velodyne_path)


def kitti_frame(drive_dir, calib_dir, index: int, camera: int = 2) -> KittiFrame:
    """Frame ``index`` of an extracted drive (``image_0i/data`` and ``velodyne_points/data``)."""
    drive = Path(drive_dir)
    return KittiFrame(
        drive / f"image_{camera:02d}" / "data" / f"{index:010d}.png",
        drive / "velodyne_points" / "data" / f"{index:010d}.bin",
        read_kitti_calib(calib_dir, camera),
    )
