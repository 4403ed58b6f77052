"""Differentiable operations on single (unbatched) ``C x H x W`` tensors."""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor


# branch decisions of the non-smooth ops, collected while ``record_branches`` is active
_branches: list | None = None


@contextmanager
def record_branches():
    """Collect ReLU masks and max-pool argmax indices of every op run inside the block.

    Finite-difference checks use this to tell whether a perturbation crossed a kink.
    """
    global _branches
    saved, _branches = _branches, []
    try:
        yield _branches
    finally:
        _branches = saved


def _record(decision: np.ndarray) -> None:
    if _branches is not None:
        _branches.append(decision)


def _needs_grad(*ts) -> bool:
    return any(t is not None and t.requires_grad for t in ts)


def _out(data, parents, backward) -> Tensor:
    parents = tuple(p for p in parents if p is not None)
    if _needs_grad(*parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def conv_output_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _im2col(x: np.ndarray, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    c = x.shape[0]
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)


def _col2im(cols: np.ndarray, shape, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    c, h, w = shape
    cols = cols.reshape(c, k, k, ho, wo)
    out = np.zeros((c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, i:i + s * ho:s, j:j + s * wo:s] += cols[:, i, j]
    return out[:, p:p + h, p:p + w]


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of a ``C_in x H x W`` input with ``C_out x C_in x k x k`` weights."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if x.data.ndim != 3:
        raise ValueError(f"conv2d: input must be C x H x W, got shape {x.shape}")
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d: weights must be C_out x C_in x k x k, got shape {weight.shape}")
    c_out, c_in, k, _ = weight.shape
    c, h, w = x.shape
    if c != c_in:
        raise ValueError(f"conv2d: input has {c} channels but weights expect C_in={c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"conv2d: bias must have shape ({c_out},), got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {k} does not fit input height {h} / width {w} with padding {padding}")

    wm = weight.data.reshape(c_out, -1)
    if k == 1 and stride == 1 and padding == 0:
        cols = x.data.reshape(c_in, -1)
    else:
        cols = _im2col(x.data, k, stride, padding, ho, wo)
    out = wm @ cols
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        g = g.reshape(c_out, -1)
        if weight.requires_grad:
            weight._accumulate((g @ cols.T).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=1))
        if x.requires_grad:
            dcols = wm.T @ g
            if k == 1 and stride == 1 and padding == 0:
                x._accumulate(dcols.reshape(x.shape))
            else:
                x._accumulate(_col2im(dcols, x.shape, k, stride, padding, ho, wo))

    return _out(out.reshape(c_out, ho, wo), (x, weight, bias), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    _record(mask)
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)

    def backward(g):
        x._accumulate(g * mask)

    return _out(out, (x,), backward)


def maxpool2d(x, k: int, stride: int | None = None) -> Tensor:
    """Window maximum; ties send the gradient to the first element in row-major order."""
    x = as_tensor(x)
    s = k if stride is None else stride
    if k < 1 or s < 1:
        raise ValueError("maxpool2d: kernel and stride must be >= 1")
    c, h, w = x.shape
    if k > h or k > w:
        raise ValueError(f"maxpool2d: window {k} larger than input {h} x {w}")
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    win = sliding_window_view(x.data, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    flat = win.reshape(c, ho, wo, k * k)
    idx = flat.argmax(axis=-1)
    _record(idx)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        dx = np.zeros_like(x.data)
        for o in range(k * k):
            i, j = divmod(o, k)
            dx[:, i:i + s * ho:s, j:j + s * wo:s] += np.where(idx == o, g, 0)
        x._accumulate(dx)

    return _out(np.ascontiguousarray(out), (x,), backward)


def global_max_pool(x) -> Tensor:
    """``C x H x W`` to a length-``C`` vector of per-channel maxima."""
    x = as_tensor(x)
    c = x.shape[0]
    flat = x.data.reshape(c, -1)
    idx = flat.argmax(axis=1)
    _record(idx)
    out = flat[np.arange(c), idx]

    def backward(g):
        dx = np.zeros_like(flat)
        dx[np.arange(c), idx] = g
        x._accumulate(dx.reshape(x.shape))

    return _out(out, (x,), backward)


def concat_channels(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"concat_channels: spatial dims differ, {a.shape[1:]} vs {b.shape[1:]}")
    ca = a.shape[0]
    out = np.concatenate([a.data, b.data], axis=0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:ca])
        if b.requires_grad:
            b._accumulate(g[ca:])

    return _out(out, (a, b), backward)


def flatten(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _out(x.data.reshape(-1), (x,), backward)


def fully_connected(x, weight, bias=None) -> Tensor:
    """``W @ x + b`` for a flattened input; ``weight`` is ``out x in``."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    v = x.data.reshape(-1)
    if weight.data.ndim != 2 or weight.shape[1] != v.size:
        raise ValueError(
            f"fully_connected: input has {v.size} values but weights have shape {weight.shape}"
        )
    out = weight.data @ v
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"fully_connected: bias must have shape ({weight.shape[0]},)")
        out = out + bias.data

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(np.outer(g, v))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g)
        if x.requires_grad:
            x._accumulate((weight.data.T @ g).reshape(x.shape))

    return _out(out, (x, weight, bias), backward)


def euclidean_loss(pred, target) -> Tensor:
    """``0.5 * sum((pred - target)**2)``; its gradient is ``pred - target``."""
    pred = as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != t.shape:
        raise ValueError(f"euclidean_loss: shapes differ, {pred.shape} vs {t.shape}")
    diff = pred.data - t.astype(pred.dtype, copy=False)
    out = np.asarray(0.5 * np.dot(diff.reshape(-1), diff.reshape(-1)), dtype=pred.dtype)

    def backward(g):
        pred._accumulate(g * diff)

    return _out(out, (pred,), backward)
