"""Projected depth drawn over the camera image, written as PNG."""

from __future__ import annotations

import numpy as np
from PIL import Image


def colormap(x: np.ndarray) -> np.ndarray:
    """Piecewise-linear blue-cyan-yellow-red map of values in ``[0, 1]`` to uint8 RGB."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * x - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * x - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * x - 1.0), 0.0, 1.0)
    return np.rint(np.stack([r, g, b], axis=-1) * 255.0).astype(np.uint8)


def to_uint8_image(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb)
    if rgb.ndim == 3 and rgb.shape[0] == 3 and rgb.shape[-1] != 3:
        rgb = rgb.transpose(1, 2, 0)
    if rgb.dtype != np.uint8:
        rgb = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    return np.ascontiguousarray(rgb)


def render_overlay(rgb: np.ndarray, depth: np.ndarray, marker: int = 0) -> np.ndarray:
    """Color every pixel with nonzero inverse depth; near points are red, far ones blue.

    ``marker`` > 0 paints a ``(2*marker + 1)`` square around each point.
    """
    img = to_uint8_image(rgb).copy()
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim == 3:
        depth = depth[0]
    if depth.shape != img.shape[:2]:
        raise ValueError(f"depth map {depth.shape} does not match image {img.shape[:2]}")
    vs, us = np.nonzero(depth > 0)
    if len(vs) == 0:
        return img
    vals = depth[vs, us]
    colors = colormap(vals / vals.max())
    # far points first so nearer markers end up on top
    order = np.argsort(vals, kind="stable")
    h, w = depth.shape
    for i in order:
        v, u = vs[i], us[i]
        img[max(v - marker, 0):min(v + marker + 1, h), max(u - marker, 0):min(u + marker + 1, w)] = colors[i]
    return img


def emit_overlay(rgb: np.ndarray, depth: np.ndarray, path, marker: int = 0) -> None:
    Image.fromarray(render_overlay(rgb, depth, marker)).save(path, format="PNG")
