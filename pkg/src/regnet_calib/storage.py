"""On-disk layout for synthetic frames and sequences, and transform parsing.

A frame is one ``.npz`` archive with float64 arrays::

    rgb        3 x H x W, values in [0, 1]
    points     N x 3, LiDAR frame
    intensity  N
    depth_ref  H x W rendered z-depth (0 = background)
    h_gt       4 x 4 LiDAR -> camera
    intrinsics (fx, fy, cx, cy, width, height)
    scene      UTF-8 JSON of the scene description (may be empty)

A sequence directory holds ``frame_000000.npz, frame_000001.npz, ...``. The
``synth-gen`` command also writes ``.png`` renders and KITTI-style ``.bin``
scans next to each archive for inspection; those are not read back.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .projection import CameraIntrinsics, PointCloud
from .scene import Frame, Scene
from .se3 import RigidTransform, orthonormalize

FRAME_GLOB = "frame_*.npz"


def frame_name(index: int) -> str:
    return f"frame_{index:06d}"


def save_frame(path, frame: Frame) -> None:
    K = frame.intrinsics
    scene = frame.scene.to_json() if frame.scene is not None else ""
    buf = io.BytesIO()
    np.savez(
        buf,
        rgb=np.asarray(frame.rgb, dtype=np.float64),
        points=frame.cloud.points,
        intensity=frame.cloud.intensity if frame.cloud.intensity is not None else np.zeros(len(frame.cloud)),
        depth_ref=np.asarray(frame.depth_ref, dtype=np.float64),
        h_gt=frame.h_gt.matrix,
        intrinsics=np.array([K.fx, K.fy, K.cx, K.cy, K.width, K.height], dtype=np.float64),
        scene=np.frombuffer(scene.encode(), dtype=np.uint8),
    )
    Path(path).write_bytes(buf.getvalue())


def load_frame(path) -> Frame:
    try:
        with np.load(path) as z:
            fx, fy, cx, cy, w, h = z["intrinsics"]
            K = CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))
            scene_txt = z["scene"].tobytes().decode()
            scene = Scene.from_dict(json.loads(scene_txt)) if scene_txt else None
            return Frame(z["rgb"], PointCloud(z["points"], z["intensity"]), z["depth_ref"], K,
                         RigidTransform.from_matrix(z["h_gt"]), scene)
    except (OSError, KeyError, ValueError) as exc:
        raise ValueError(f"{path}: not a frame archive ({exc})") from exc


def sequence_paths(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ValueError(f"{directory}: not a directory")
    paths = sorted(d.glob(FRAME_GLOB))
    if not paths:
        raise ValueError(f"{directory}: no {FRAME_GLOB} files")
    return paths


def load_sequence(directory) -> list[Frame]:
    return [load_frame(p) for p in sequence_paths(directory)]


def parse_transform(text: str) -> RigidTransform:
    """A 4x4 or 3x4 matrix, given inline (12 or 16 numbers separated by commas or
    whitespace) or as a path to a text file holding those numbers."""
    try:
        is_file = Path(text).is_file()
    except OSError:    # inline matrices can exceed the file-name length limit
        is_file = False
    src = Path(text).read_text() if is_file else text
    try:
        vals = np.array([float(v) for v in src.replace(",", " ").split()])
    except ValueError as exc:
        raise ValueError(f"cannot parse transform {text!r}: {exc}") from exc
    if vals.size == 12:
        vals = np.concatenate([vals, [0.0, 0.0, 0.0, 1.0]])
    if vals.size != 16:
        raise ValueError(f"transform needs 12 or 16 numbers, got {vals.size}")
    m = vals.reshape(4, 4)
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError("last row of a 4x4 transform must be 0 0 0 1")
    H = RigidTransform.from_matrix(m)
    if not H.is_valid(1e-4):
        raise ValueError("transform rotation is not orthonormal (tolerance 1e-4)")
    if not H.is_valid(1e-12):
        # printed matrices carry limited precision
        H = RigidTransform(orthonormalize(H.rotation), H.translation)
    return H


def format_transform(H: RigidTransform) -> str:
    """3 x 4 matrix, one row per line, shortest round-trip float repr."""
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in H.matrix[:3])
