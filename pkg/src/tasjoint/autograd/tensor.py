"""Reverse-mode automatic differentiation over dense numpy arrays.

Every differentiable op produces a :class:`Tensor` holding its parents, a
backward closure and the arrays that closure needs.  Those arrays are
registered with the thread-local :class:`Graph`, which keeps a running count
of retained bytes.  The count is what the memory probes of the trainer read.
"""
from __future__ import annotations

import contextlib
import threading
from collections import defaultdict

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform; ``dim`` names the offending dimension."""

    def __init__(self, op, dim, got, expected=None):
        self.op = op
        self.dim = dim
        self.got = got
        self.expected = expected
        msg = f"{op}: bad {dim} (got {got}"
        if expected is not None:
            msg += f", expected {expected}"
        super().__init__(msg + ")")


class GraphReleasedError(RuntimeError):
    pass


_DTYPES = {"float64": np.float64, "float32": np.float32}


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.dtype = np.float64
        self.graph = Graph()
        self.tag = "default"


class Graph:
    """Ordered record of the ops built since the last release.

    ``retained_bytes`` is the total size of the arrays held for backward.
    An array saved by several ops is counted once.
    """

    def __init__(self):
        self.nodes = []
        self._saved = {}
        self.retained_bytes = 0
        self.retained_by_tag = defaultdict(int)
        self.peak_bytes = 0
        self.peak_by_tag = defaultdict(int)

    def record(self, node, saved, tag):
        self.nodes.append(node)
        for arr in saved:
            # Views of one buffer share a key so they are counted once.
            key = (arr.__array_interface__["data"][0], arr.nbytes)
            if key in self._saved:
                continue
            self._saved[key] = (arr, tag)
            self.retained_bytes += arr.nbytes
            self.retained_by_tag[tag] += arr.nbytes
            if self.retained_by_tag[tag] > self.peak_by_tag[tag]:
                self.peak_by_tag[tag] = self.retained_by_tag[tag]
        if self.retained_bytes > self.peak_bytes:
            self.peak_bytes = self.retained_bytes

    def release(self):
        for node in self.nodes:
            node._backward = None
            node._parents = ()
            node._released = True
        self.nodes = []
        self._saved = {}
        self.retained_bytes = 0
        self.retained_by_tag = defaultdict(int)

    def reset_peak(self):
        self.peak_bytes = self.retained_bytes
        self.peak_by_tag = defaultdict(int, self.retained_by_tag)


_state = _State()


def current_graph():
    return _state.graph


def is_grad_enabled():
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad():
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def enable_grad():
    prev = _state.grad_enabled
    _state.grad_enabled = True
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def memory_tag(tag):
    """Attribute arrays retained inside the block to ``tag``."""
    prev = _state.tag
    _state.tag = tag
    try:
        yield
    finally:
        _state.tag = prev


def get_default_dtype():
    return _state.dtype


def set_default_dtype(name):
    if isinstance(name, str):
        if name not in _DTYPES:
            raise ValueError(f"unknown precision {name!r}; use one of {sorted(_DTYPES)}")
        _state.dtype = _DTYPES[name]
    else:
        _state.dtype = np.dtype(name).type


@contextlib.contextmanager
def precision(name):
    prev = _state.dtype
    set_default_dtype(name)
    try:
        yield
    finally:
        _state.dtype = prev


def dtype_name(dtype):
    return np.dtype(dtype).name


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward",
                 "_released", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not isinstance(data, np.ndarray) or arr.dtype.kind != "f":
            arr = arr.astype(_state.dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None
        self._released = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.data.shape[0]

    def backward(self):
        backward(self)

    # -- operator sugar; the implementations live in ops ------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops
        return ops.mean(self, axis)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def make_node(data, parents, backward_fn, saved=()):
    """Wrap ``data`` as an op output and record it when any parent needs grad.

    ``backward_fn(grad_out)`` must return one gradient (or ``None``) per
    parent.  ``saved`` lists the arrays the closure keeps alive.
    """
    out = Tensor(data, dtype=data.dtype if isinstance(data, np.ndarray) else None)
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        _state.graph.record(out, [s for s in saved if isinstance(s, np.ndarray)], _state.tag)
    return out


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every grad leaf.

    The thread's graph is released afterwards; calling backward again on a
    released node raises :class:`GraphReleasedError`.
    """
    if root.data.size != 1:
        raise ShapeError("backward", "root size", root.data.shape, "a scalar")
    if root._released:
        raise GraphReleasedError("graph already released; re-run the forward pass")
    if not root.requires_grad:
        raise RuntimeError("root does not require grad")
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node._released:
                raise GraphReleasedError("graph already released; re-run the forward pass")
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            if pg.shape != p.data.shape:
                raise ShapeError("backward", "gradient shape", pg.shape, p.data.shape)
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    _state.graph.release()
