"""Binary weight checkpoints.

Layout (all integers little-endian)::

    magic      8 bytes   b"RGNTCKPT"
    version    uint32    currently 1
    cfg_len    uint32    length of the UTF-8 JSON config that follows
    cfg        cfg_len bytes
    n_blobs    uint32
    n_blobs x blob:
        name_len  uint16
        name      name_len bytes, UTF-8
        dtype     uint8     0 = float32, 1 = float64
        ndim      uint8
        dims      ndim x uint32
        values    prod(dims) little-endian floats, C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RGNTCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def dumps(blobs: dict[str, np.ndarray], config: dict) -> bytes:
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(blobs))]
    for name, arr in blobs.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for blob {name!r}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = json.loads(bytes(take(cfg_len)).decode("utf-8"))
    (n_blobs,) = struct.unpack("<I", take(4))
    blobs = {}
    for _ in range(n_blobs):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for blob {name!r}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dt = _DTYPES[code]
        count = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(take(count * dt.itemsize), dtype=dt).reshape(dims)
        blobs[name] = arr.astype(dt.newbyteorder("="), copy=True)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after the last blob")
    return blobs, config


def save(path, blobs: dict[str, np.ndarray], config: dict) -> None:
    Path(path).write_bytes(dumps(blobs, config))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
