"""Differentiable primitives.

Each function computes its value with numpy and registers a closure that
maps the output gradient to one gradient per input.
"""
from __future__ import annotations

import numpy as np

from gpa import kernels
from gpa.autodiff.tensor import Tensor, as_tensor, make_result
from gpa.errors import ShapeError, ZeroNormError


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(x, c: float):
    x = as_tensor(x)
    c = float(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return make_result(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.shape}")
    return make_result(x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {old} -> {shape}") from None
    return make_result(y, (x,), lambda g: (g.reshape(old),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return make_result(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    xd = x.data
    return make_result(np.log(xd), (x,), lambda g: (g / xd,))


def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    y = x.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return make_result(y, (x,), back)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis), 1.0 / n)


def concat(xs, axis=0):
    xs = [as_tensor(t) for t in xs]
    try:
        y = np.concatenate([t.data for t in xs], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from None
    cuts = np.cumsum([t.shape[axis] for t in xs])[:-1]
    return make_result(y, tuple(xs), lambda g: tuple(np.split(g, cuts, axis=axis)))


def concat_rows(xs):
    return concat(xs, axis=0)


def gather_rows(x, idx):
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return make_result(x.data[idx], (x,), back)


def segment_sum(x, segment_ids, num_segments=None):
    """Row ``s`` of the result is the sum of the rows of ``x`` whose id is ``s``."""
    x = as_tensor(x)
    ids = np.ascontiguousarray(segment_ids, dtype=np.int64)
    if x.ndim != 2 or ids.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_sum: values {x.shape} vs ids {ids.shape}")
    if num_segments is None:
        num_segments = int(ids.max()) + 1 if ids.size else 0
    y = kernels.segment_sum(x.data, ids, int(num_segments))
    return make_result(y, (x,), lambda g: (g[ids],))


def neighbor_sum(x, offsets, neighbors):
    """Sum of neighbour rows over a symmetric CSR adjacency.

    Symmetry makes the operator self-adjoint, so the backward pass reuses
    the forward kernel.
    """
    x = as_tensor(x)
    off = np.ascontiguousarray(offsets, dtype=np.int64)
    nb = np.ascontiguousarray(neighbors, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != off.shape[0] - 1:
        raise ShapeError(f"neighbor_sum: {x.shape} rows vs {off.shape[0] - 1} nodes")
    y = kernels.neighbor_sum(off, nb, x.data)
    return make_result(y, (x,), lambda g: (kernels.neighbor_sum(off, nb, g),))


def row_softmax(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"row_softmax expects a matrix, got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return make_result(p, (x,), lambda g: (p * (g - (g * p).sum(axis=1, keepdims=True)),))


def row_logsumexp(x, mask=None):
    """``log(sum_j mask[i, j] * exp(x[i, j]))`` per row, max-shifted.

    Rows with no unmasked entry are an error.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"row_logsumexp expects a matrix, got {x.shape}")
    m = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != x.shape:
        raise ShapeError(f"mask {m.shape} vs values {x.shape}")
    if not m.any(axis=1).all():
        raise ShapeError("row_logsumexp: a row has no unmasked entries")
    xm = np.where(m, x.data, -np.inf)
    c = xm.max(axis=1, keepdims=True)
    e = np.where(m, np.exp(xm - c), 0.0)
    s = e.sum(axis=1, keepdims=True)
    y = (np.log(s) + c)[:, 0]
    w = e / s
    return make_result(y, (x,), lambda g: (w * g[:, None],))


def normalize_rows(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"normalize_rows expects a matrix, got {x.shape}")
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise ZeroNormError("zero-norm row")
    u = x.data / norms

    def back(g):
        return ((g - u * (g * u).sum(axis=1, keepdims=True)) / norms,)

    return make_result(u, (x,), back)


def layer_norm_rows(x, eps: float = 1e-5):
    """Per-row standardisation ``(x - mean) / sqrt(var + eps)`` without
    learned scale or shift."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"layer_norm_rows expects a matrix, got {x.shape}")
    xc = x.data - x.data.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    y = xc * inv

    def back(g):
        return (inv * (g - g.mean(axis=1, keepdims=True)
                       - y * (g * y).mean(axis=1, keepdims=True)),)

    return make_result(y, (x,), back)


def cosine_similarity(a, b):
    """Pairwise cosine similarities: ``[len(a), len(b)]``; 1-d inputs are
    treated as single rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1:
        a = reshape(a, (1, -1))
    if b.ndim == 1:
        b = reshape(b, (1, -1))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_similarity: widths {a.shape[1]} vs {b.shape[1]}")
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with ``weight`` of shape ``[in, out]``."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


__all__ = [
    "Tensor", "add", "sub", "mul", "scale", "matmul", "transpose", "reshape", "relu", "exp",
    "log", "sum", "mean", "concat", "concat_rows", "gather_rows", "segment_sum", "neighbor_sum",
    "row_softmax", "row_logsumexp", "normalize_rows", "layer_norm_rows", "cosine_similarity", "linear",
]
