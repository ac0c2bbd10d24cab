"""Parameter containers shared by the separator and the recognizer."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .autograd import Tensor
from .autograd.checkpoint import load_checkpoint, save_checkpoint


class IncompatibleCheckpointError(ValueError):
    pass


class Module:
    """Flat, ordered name -> Tensor parameter store."""

    kind = "module"

    def __init__(self):
        self.params = OrderedDict()

    def add_param(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def num_params(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype):
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def state_dict(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state_dict(self, state):
        missing = [k for k in self.params if k not in state]
        extra = [k for k in state if k not in self.params]
        if missing or extra:
            raise IncompatibleCheckpointError(f"{self.kind}: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise IncompatibleCheckpointError(f"{self.kind}: {k} has shape {arr.shape}, model expects {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def config_dict(self):
        return {}

    def save(self, path, extra=None, meta=None):
        tensors = OrderedDict((f"{self.kind}/{k}", v.data) for k, v in self.params.items())
        if extra:
            tensors.update(extra)
        info = {"kind": self.kind, "config": self.config_dict()}
        info.update(meta or {})
        return save_checkpoint(path, tensors, info)

    def load(self, path):
        """Load this module's namespace from ``path``; returns ``(extra tensors, meta)``."""
        tensors, meta, _ = load_checkpoint(path)
        prefix = f"{self.kind}/"
        own = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        if not own:
            raise IncompatibleCheckpointError(f"{path}: no '{self.kind}' parameters")
        self.load_state_dict(own)
        extra = {k: v for k, v in tensors.items() if not k.startswith(prefix)}
        return extra, meta


def uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
