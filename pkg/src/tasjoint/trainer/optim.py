"""Adam and Adadelta over named parameter tensors, with global-norm clipping."""
from __future__ import annotations

import numpy as np

from ..autograd import ShapeError


def clip_grad_norm(params, max_norm):
    """Scale gradients in place so their joint L2 norm is at most ``max_norm``; return the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


class Optimizer:
    """Base class; ``params`` is an ordered mapping ``name -> Tensor``."""

    slots = ()

    def __init__(self, params):
        self.params = dict(params)
        self.state = {name: {s: np.zeros_like(p.data) for s in self.slots} for name, p in self.params.items()}
        self.steps = 0

    def step(self):
        self.steps += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError("optimizer", name, p.grad.shape, p.data.shape)
            self._update(p, p.grad, self.state[name])

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_tensors(self, prefix="opt"):
        out = {f"{prefix}/{name}/{slot}": arr for name, st in self.state.items() for slot, arr in st.items()}
        out[f"{prefix}/steps"] = np.asarray([self.steps], dtype=np.int64)
        return out

    def load_state_tensors(self, tensors, prefix="opt"):
        for name, st in self.state.items():
            for slot in st:
                key = f"{prefix}/{name}/{slot}"
                if key not in tensors:
                    raise KeyError(f"optimizer state missing {key}")
                arr = tensors[key]
                if arr.shape != st[slot].shape:
                    raise ShapeError("optimizer state", key, arr.shape, st[slot].shape)
                st[slot] = arr.astype(st[slot].dtype).copy()
        self.steps = int(tensors[f"{prefix}/steps"][0])


class Adam(Optimizer):
    slots = ("m", "v")

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def _update(self, p, g, st):
        b1, b2 = self.beta1, self.beta2
        st["m"] *= b1
        st["m"] += (1 - b1) * g
        st["v"] *= b2
        st["v"] += (1 - b2) * g * g
        m_hat = st["m"] / (1 - b1 ** self.steps)
        v_hat = st["v"] / (1 - b2 ** self.steps)
        p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)


class Adadelta(Optimizer):
    slots = ("sq_grad", "sq_delta")

    def __init__(self, params, lr=1.0, rho=0.95, eps=1e-6):
        super().__init__(params)
        self.lr, self.rho, self.eps = lr, rho, eps

    def _update(self, p, g, st):
        rho, eps = self.rho, self.eps
        st["sq_grad"] *= rho
        st["sq_grad"] += (1 - rho) * g * g
        delta = np.sqrt(st["sq_delta"] + eps) / np.sqrt(st["sq_grad"] + eps) * g
        st["sq_delta"] *= rho
        st["sq_delta"] += (1 - rho) * delta * delta
        p.data -= (self.lr * delta).astype(p.data.dtype)


def make_optimizer(name, params, **kw):
    """Build ``adam`` or ``adadelta``; irrelevant keyword arguments are ignored."""
    if name == "adam":
        keys = ("lr", "beta1", "beta2", "eps")
        return Adam(params, **{k: v for k, v in kw.items() if k in keys and v is not None})
    if name == "adadelta":
        keys = ("lr", "rho", "eps")
        return Adadelta(params, **{k: v for k, v in kw.items() if k in keys and v is not None})
    raise ValueError(f"unknown optimizer {name!r}; expected 'adam' or 'adadelta'")
