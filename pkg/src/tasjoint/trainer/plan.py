"""Training settings for separator pre-training, recognizer pre-training and joint fine-tuning."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

from ..losses import mode_weights
from .tbptt import CHUNK_POLICIES

# Which halves receive parameter updates in each fine-tuning mode.
MODE_TRAINABLE = {"a": (False, True), "b": (True, False), "c": (True, True),
                  "pretrain-fe": (True, False), "pretrain-asr": (False, True)}


class _Settings:
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"{cls.__name__}: unknown key(s) {', '.join(unknown)}")
        return cls(**data)


@dataclass
class OptimizerSettings(_Settings):
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: Optional[float] = None  # None picks the optimizer default
    rho: float = 0.95
    grad_clip: float = 5.0

    def validate(self):
        if self.optimizer not in ("adam", "adadelta"):
            raise ValueError(f"optimizer must be 'adam' or 'adadelta', got {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        return self

    def kwargs(self, lr=None):
        return {"lr": self.lr if lr is None else lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "rho": self.rho}


@dataclass
class SeparatorTraining(OptimizerSettings):
    steps: int = 600
    batch_size: int = 4
    crop_samples: int = 2000
    eval_every: int = 100
    seed: int = 0

    def validate(self):
        super().validate()
        if self.steps < 0 or self.batch_size < 1 or self.crop_samples < 1:
            raise ValueError("steps, batch_size and crop_samples must be positive")
        return self


@dataclass
class AsrTraining(OptimizerSettings):
    optimizer: str = "adadelta"
    lr: float = 1.0
    epochs: int = 20
    batch_size: int = 8
    max_steps: Optional[int] = None
    eval_every_epoch: int = 5
    seed: int = 0

    def validate(self):
        super().validate()
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        return self


@dataclass
class FinetunePlan(OptimizerSettings):
    """Joint fine-tuning of separator and recognizer.

    ``alpha``/``beta`` and the freeze flags default to the preset of ``mode``
    and may be overridden individually.
    """

    mode: str = "c"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    freeze_frontend: Optional[bool] = None
    freeze_backend: Optional[bool] = None
    lam: float = 0.2
    perm: str = "sig"
    tbptt_chunk: Optional[int] = None
    chunk_policy: str = "uniform"
    frontend_lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 1
    max_steps: Optional[int] = None
    seed: int = 0

    def validate(self):
        super().validate()
        mode_weights(self.mode)
        a, b = self.weights()
        if a < 0 or b < 0 or (a == 0 and b == 0):
            raise ValueError(f"invalid loss weights alpha={a}, beta={b}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.perm not in ("sig", "ctc"):
            raise ValueError(f"perm must be 'sig' or 'ctc', got {self.perm!r}")
        if self.chunk_policy not in CHUNK_POLICIES:
            raise ValueError(f"chunk_policy must be one of {CHUNK_POLICIES}")
        if self.tbptt_chunk is not None and self.tbptt_chunk < 1:
            raise ValueError("tbptt_chunk must be a positive sample count")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        fe, be = self.trainable()
        if not (fe or be):
            raise ValueError("both halves are frozen; nothing to train")
        return self

    def weights(self):
        a0, b0 = mode_weights(self.mode)
        return (a0 if self.alpha is None else float(self.alpha),
                b0 if self.beta is None else float(self.beta))

    def trainable(self):
        fe, be = MODE_TRAINABLE[self.mode]
        if self.freeze_frontend is not None:
            fe = not self.freeze_frontend
        if self.freeze_backend is not None:
            be = not self.freeze_backend
        return fe, be
