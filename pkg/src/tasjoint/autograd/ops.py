"""Differentiable elementwise, reduction and shape ops.

Binary ops broadcast only over leading extents: one operand's shape must be
a suffix of the other's (a scalar is the empty suffix).  Anything else is a
:class:`ShapeError`.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, get_default_dtype, make_node


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(x, dtype=dtype))


def _check_broadcast(op, a, b):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(op, "trailing dims", sa, sb)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


# -- arithmetic ------------------------------------------------------------

def add(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_node(a.data + b.data, (a, b), back)


def sub(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return make_node(a.data - b.data, (a, b), back)


def mul(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    saved = []
    if b.requires_grad:
        saved.append(ad)
    if a.requires_grad:
        saved.append(bd)
    return make_node(ad * bd, (a, b), back, saved)


def div(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), back, (bd, out) if b.requires_grad else (bd,))


def neg(a):
    return make_node(-a.data, (a,), lambda g: (-g,))


def square(a):
    ad = a.data
    return make_node(ad * ad, (a,), lambda g: (2.0 * ad * g,), (ad,))


def sqrt(a):
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (0.5 * g / out,), (out,))


def exp(a):
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), (out,))


def log(a):
    ad = a.data
    return make_node(np.log(ad), (a,), lambda g: (g / ad,), (ad,))


def tanh(a):
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),), (out,))


def _sigmoid(x):
    # Stable for large |x| in both directions.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = _sigmoid(a.data)
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),), (out,))


def relu(a):
    out = np.maximum(a.data, 0)
    return make_node(out, (a,), lambda g: (g * (out > 0),), (out,))


def prelu(a, slope):
    """PReLU with a single learnable slope (shape ``()`` or ``(1,)``)."""
    slope = _lift(slope, a)
    if slope.size != 1:
        raise ShapeError("prelu", "slope size", slope.shape, "1")
    x = a.data
    s = slope.data.reshape(())
    pos = x > 0
    out = np.where(pos, x, s * x)

    def back(g):
        ga = g * np.where(pos, 1.0, s).astype(x.dtype) if a.requires_grad else None
        gs = None
        if slope.requires_grad:
            gs = np.asarray(np.sum(np.where(pos, 0.0, x) * g)).astype(x.dtype).reshape(slope.shape)
        return ga, gs

    return make_node(out, (a, slope), back, (x,))


def clip(a, lo, hi):
    """Clamp; the gradient is zero wherever the clamp is active."""
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return make_node(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), (inside,))


# -- linear algebra -------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError("matmul", "inner dim", a.shape, b.shape)
    ad, bd = a.data, b.data

    def back(g):
        ga = gb = None
        if a.requires_grad:
            if bd.ndim == 1:
                ga = np.multiply.outer(g, bd)
            else:
                ga = g @ np.swapaxes(bd, -1, -2)
            ga = _unbroadcast(ga, ad.shape)
        if b.requires_grad:
            if ad.ndim == 1:
                gb = np.multiply.outer(ad, g)
            elif bd.ndim == 1:
                gb = np.swapaxes(ad, -1, -2) @ g[..., None]
                gb = gb.reshape(-1, bd.shape[0]).sum(0)
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
            gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    saved = []
    if b.requires_grad:
        saved.append(ad)
    if a.requires_grad:
        saved.append(bd)
    return make_node(ad @ bd, (a, b), back, saved)


def affine(x, weight, bias=None):
    """``x @ weight + bias`` over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("affine", "input features", x.shape[-1], weight.shape[0])
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError("affine", "bias", bias.shape, (weight.shape[1],))
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if bias is None:
            return gx, gw
        gb = g.reshape(-1, g.shape[-1]).sum(0) if bias.requires_grad else None
        return gx, gw, gb

    saved = []
    if weight.requires_grad:
        saved.append(xd)
    if x.requires_grad:
        saved.append(wd)
    return make_node(out, parents, back, saved)


# -- reductions -----------------------------------------------------------

def sum(a, axis=None):
    shape = a.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return make_node(np.asarray(a.data.sum(axis=axis)), (a,), back)


def mean(a, axis=None):
    shape = a.shape
    n = a.size if axis is None else np.prod([shape[i] for i in np.atleast_1d(axis)])

    def back(g):
        if axis is None:
            return (np.full(shape, g / n, dtype=a.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return make_node(np.asarray(a.data.mean(axis=axis)), (a,), back)


def log_softmax(a, axis=-1):
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def back(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (a,), back, (out,))


def softmax(a, axis=-1):
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (a,), back, (out,))


# -- shape ops ------------------------------------------------------------

def reshape(a, shape):
    old = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    inv = None if axes is None else tuple(np.argsort(axes))
    return make_node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, index):
    """Basic slicing / integer indexing."""
    shape, dtype = a.shape, a.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g) if _is_fancy(index) else full.__setitem__(index, g)
        return (full,)

    return make_node(np.array(a.data[index]), (a,), back)


def _is_fancy(index):
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", "non-concat dims", t.shape, ref)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
                     for i in range(len(tensors)))

    return make_node(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), back)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError("stack", "shape", t.shape, tensors[0].shape)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back)


def take_rows(table, indices):
    """Embedding lookup: ``table[indices]`` along axis 0."""
    idx = np.asarray(indices, dtype=np.int64)
    shape, dtype = table.shape, table.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return make_node(table.data[idx], (table,), back, (idx,))


def pick(a, indices):
    """``a[i, indices[i]]`` for a 2-D ``a``; used for cross-entropy."""
    idx = np.asarray(indices, dtype=np.int64)
    if a.ndim != 2 or idx.shape != (a.shape[0],):
        raise ShapeError("pick", "rows", idx.shape, (a.shape[0],) if a.ndim == 2 else "2-D input")
    rows = np.arange(a.shape[0])
    shape, dtype = a.shape, a.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        full[rows, idx] = g
        return (full,)

    return make_node(a.data[rows, idx], (a,), back, (idx,))


def pad_last(a, left, right):
    """Zero-pad the last axis."""
    n = a.shape[-1]
    width = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    return make_node(np.pad(a.data, width), (a,), lambda g: (g[..., left:left + n],))
