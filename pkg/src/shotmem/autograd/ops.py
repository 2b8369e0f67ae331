"""Primitive differentiable ops.

The set is closed: linear maps, matrix products, last-axis softmax, scaled
dot-product attention, layer normalization, pointwise add/sub/mul/tanh, mean
reductions, spatial average pooling, non-overlapping patch extraction and
mean-squared error, plus the structural ops (reshape, transpose, concat,
gather) needed to wire them together.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor

LN_EPS = 1e-6


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(node: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(node, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), back, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._from_op(a.data * c, (a,), lambda g: (g * c,), "scale")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy semantics over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"(...,n,{a.shape[-1] if a.ndim else '?'}) @ ({a.shape[-1] if a.ndim else '?'},...)", (a.shape, b.shape))
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape[:-2], b.shape[:-2]) from None
    out = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(out, (a, b), back, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is (in, out)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError("linear", (..., w.shape[0] if w.ndim == 2 else "?"), x.shape)
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError("linear.bias", (w.shape[1],), b.shape)
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    x2 = x.data.reshape(-1, w.shape[0])

    def back(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = g @ w.data.T
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._from_op(out, parents, back, "linear")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), back, "softmax")


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q kᵀ / sqrt(d)) v over the last two axes.

    ``mask`` is a boolean array broadcastable to (..., Lq, Lk); False entries
    are excluded. Rows with no admissible key produce zeros.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", f"q(...,{k.shape[-1]}) k(...,Lk,d) v(...,{k.shape[-2]},dv)",
                         (q.shape, k.shape, v.shape))
    d = q.shape[-1]
    scl = 1.0 / np.sqrt(d)
    logits = (q.data @ np.swapaxes(k.data, -1, -2)) * scl
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        logits = np.where(mask, logits, -np.inf)
        row_max = logits.max(axis=-1, keepdims=True)
        empty = ~np.isfinite(row_max)
        row_max = np.where(empty, 0.0, row_max)
        e = np.where(mask, np.exp(logits - row_max), 0.0)
        denom = e.sum(axis=-1, keepdims=True)
        p = e / np.where(denom > 0, denom, 1.0)
    else:
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
    out = p @ v.data

    def back(g):
        gv = np.swapaxes(p, -1, -2) @ g
        gp = g @ np.swapaxes(v.data, -1, -2)
        gl = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scl
        gq = gl @ k.data
        gk = np.swapaxes(gl, -1, -2) @ q.data
        return _unbroadcast(gq, q.shape), _unbroadcast(gk, k.shape), _unbroadcast(gv, v.shape)

    return Tensor._from_op(out, (q, k, v), back, "attention")


def layer_norm(x: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gy_mean = g.mean(axis=-1, keepdims=True)
        gyy_mean = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gy_mean - y * gyy_mean),)

    return Tensor._from_op(y, (x,), back, "layer_norm")


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    out = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        axes = tuple(range(x.ndim))
    else:
        axes = tuple(sorted(a % x.ndim for a in ((axis,) if isinstance(axis, int) else axis)))
    count = int(np.prod([x.shape[a] for a in axes]))

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out, dtype=np.float64), (x,), back, "mean")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return Tensor._from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Average-pool an (..., H, W, C) tensor with a k×k window and stride k."""
    if x.ndim < 3:
        raise ShapeError("avg_pool2d", "(..., H, W, C)", x.shape)
    *lead, h, w, c = x.shape
    if h % k or w % k:
        raise ShapeError("avg_pool2d", f"H, W divisible by {k}", (h, w))
    r = x.data.reshape(*lead, h // k, k, w // k, k, c)
    out = r.mean(axis=(-4, -2))

    def back(g):
        g = g[..., :, None, :, None, :] / (k * k)
        g = np.broadcast_to(g, r.shape)
        return (g.reshape(x.shape),)

    return Tensor._from_op(out, (x,), back, "avg_pool2d")


def patchify(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k×k patches of an (..., H, W, C) grid.

    Returns (..., (H/k)·(W/k), k·k·C); patches are in row-major grid order and
    each patch is flattened row-major over (dy, dx, c).
    """
    if x.ndim < 3:
        raise ShapeError("patchify", "(..., H, W, C)", x.shape)
    *lead, h, w, c = x.shape
    if h % k or w % k:
        raise ShapeError("patchify", f"H, W divisible by {k}", (h, w))
    nl = len(lead)
    r = x.data.reshape(*lead, h // k, k, w // k, k, c)
    perm = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3, nl + 4)
    out = r.transpose(perm).reshape(*lead, (h // k) * (w // k), k * k * c)
    inv = tuple(np.argsort(perm))

    def back(g):
        g = g.reshape(*lead, h // k, w // k, k, k, c).transpose(inv)
        return (g.reshape(x.shape),)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), back, "patchify")


def mse(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n)

    def back(g):
        gd = (2.0 / n) * diff * g
        return gd, -gd

    return Tensor._from_op(out, (pred, target), back, "mse")


# structural ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return Tensor._from_op(out, (x,), lambda g: (g.transpose(inv),), "transpose")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    ax = axis % xs[0].ndim
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, t.shape)
    out = np.concatenate([t.data for t in xs], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(xs)))

    return Tensor._from_op(out, tuple(xs), back, "concat")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather entries along ``axis`` with constant integer indices."""
    idx = np.asarray(indices, dtype=np.int64)
    ax = axis % x.ndim
    out = np.take(x.data, idx, axis=ax)

    def back(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, ax, 0)
        gm = np.moveaxis(g, tuple(range(ax, ax + idx.ndim)), tuple(range(idx.ndim)))
        np.add.at(moved, idx, gm)
        return (gx,)

    return Tensor._from_op(out, (x,), back, "take")


def gather_rows(x: Tensor, idx) -> Tensor:
    """Per-batch gather: x (B, F, ...), idx (B, n) -> (B, n, ...)."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[0] != x.shape[0]:
        raise ShapeError("gather_rows", (x.shape[0], "n"), idx.shape)
    rows = np.arange(x.shape[0])[:, None]
    out = x.data[rows, idx]

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return Tensor._from_op(out, (x,), back, "gather_rows")
