"""Conv-TasNet separator: learned encoder, dilated TCN mask estimator, overlap-add decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .nn import Module, uniform_fan_in
from .seeding import rng_for


@dataclass
class SeparatorConfig:
    """Hyper-parameters in the usual Conv-TasNet notation.

    N basis filters of length L, bottleneck width B, block width H, kernel
    size P, X blocks per repeat (dilations 1, 2, ..., 2**(X-1)), R repeats,
    S output sources.
    """

    N: int = 64
    L: int = 16
    B: int = 32
    H: int = 64
    P: int = 3
    X: int = 4
    R: int = 2
    S: int = 2
    norm: str = "gln"
    mask_nonlinearity: str = "sigmoid"

    @classmethod
    def paper(cls):
        return cls(N=512, L=16, B=128, H=512, P=3, X=8, R=3, S=2)

    @property
    def stride(self):
        return self.L // 2

    def validate(self):
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be even, got {self.L}")
        if self.X < 1 or self.R < 1:
            raise ValueError("X and R must be >= 1")
        if self.S < 2:
            raise ValueError("S must be >= 2")
        if self.P < 1 or self.P % 2 == 0:
            raise ValueError(f"P must be odd for symmetric padding, got {self.P}")
        if self.norm not in ("gln", "fln"):
            raise ValueError(f"norm must be 'gln' or 'fln', got {self.norm!r}")
        if self.mask_nonlinearity != "sigmoid":
            raise ValueError("only the sigmoid mask head is implemented")
        for name in ("N", "B", "H"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        return self

    def dilations(self):
        return [2 ** x for _ in range(self.R) for x in range(self.X)]

    def to_dict(self):
        return asdict(self)


def receptive_field_frames(config):
    return 1 + config.R * (config.P - 1) * (2 ** config.X - 1)


def receptive_field(config):
    """Receptive field of the separator in samples."""
    return (receptive_field_frames(config) - 1) * config.stride + config.L


def num_frames(n_samples, config):
    return (n_samples - config.L) // config.stride + 1


class ConvTasNet(Module):
    kind = "separator"

    def __init__(self, config=None, seed=0, dtype=np.float64):
        super().__init__()
        self.config = cfg = (config or SeparatorConfig()).validate()
        rng = rng_for(seed, "separator-init")
        N, L, B, H, P, S = cfg.N, cfg.L, cfg.B, cfg.H, cfg.P, cfg.S

        def conv(name, c_out, c_in, k):
            self.add_param(f"{name}.weight", uniform_fan_in(rng, (c_out, c_in, k), c_in * k).astype(dtype))
            self.add_param(f"{name}.bias", np.zeros(c_out, dtype=dtype))

        def norm(name, c):
            self.add_param(f"{name}.gain", np.ones(c, dtype=dtype))
            self.add_param(f"{name}.bias", np.zeros(c, dtype=dtype))

        self.add_param("encoder.weight", uniform_fan_in(rng, (N, 1, L), L).astype(dtype))
        norm("input_norm", N)
        conv("bottleneck", B, N, 1)
        n_blocks = cfg.R * cfg.X
        for i in range(n_blocks):
            p = f"blocks.{i}"
            conv(f"{p}.in", H, B, 1)
            self.add_param(f"{p}.prelu1", np.full(1, 0.25, dtype=dtype))
            norm(f"{p}.norm1", H)
            conv(f"{p}.dconv", H, 1, P)
            self.add_param(f"{p}.prelu2", np.full(1, 0.25, dtype=dtype))
            norm(f"{p}.norm2", H)
            if i < n_blocks - 1:
                conv(f"{p}.res", B, H, 1)
            conv(f"{p}.skip", B, H, 1)
        self.add_param("mask.prelu", np.full(1, 0.25, dtype=dtype))
        conv("mask", S * N, B, 1)
        self.add_param("decoder.weight", uniform_fan_in(rng, (N, 1, L), N).astype(dtype))

    def config_dict(self):
        return self.config.to_dict()

    def _norm(self, x, name):
        fn = ag.global_layer_norm if self.config.norm == "gln" else ag.frame_layer_norm
        return fn(x, self.params[f"{name}.gain"], self.params[f"{name}.bias"])

    def _conv(self, x, name, **kw):
        return ag.conv1d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"], **kw)

    # -- stages -----------------------------------------------------------
    def encode(self, x):
        """Waveform [T] or [batch, T] -> non-negative latent [N, F] / [batch, N, F]."""
        x = ag.as_tensor(x)
        L = self.config.L
        if x.shape[-1] < L:
            raise ShapeError("encode", "signal length", x.shape[-1], f">= L = {L} samples")
        x3 = x.reshape((x.shape[0] if x.ndim == 2 else 1, 1, x.shape[-1]))
        w = ag.relu(ag.conv1d(x3, self.params["encoder.weight"], stride=self.config.stride))
        return w if x.ndim == 2 else w.reshape(w.shape[1:])

    def separate_masks(self, latent, mask_hook=None):
        """Latent [N, F] (or batched) -> masks [S, N, F] in (0, 1)."""
        cfg = self.config
        batched = latent.ndim == 3
        w = latent if batched else latent.reshape((1,) + latent.shape)
        nb, _, F = w.shape
        y = self._conv(self._norm(w, "input_norm"), "bottleneck")
        skips = None
        n_blocks = cfg.R * cfg.X
        for i, d in enumerate(cfg.dilations()):
            p = f"blocks.{i}"
            h = self._conv(y, f"{p}.in")
            h = self._norm(ag.prelu(h, self.params[f"{p}.prelu1"]), f"{p}.norm1")
            h = self._conv(h, f"{p}.dconv", dilation=d, padding=d * (cfg.P - 1) // 2, groups=cfg.H)
            h = self._norm(ag.prelu(h, self.params[f"{p}.prelu2"]), f"{p}.norm2")
            s = self._conv(h, f"{p}.skip")
            skips = s if skips is None else skips + s
            if i < n_blocks - 1:
                y = y + self._conv(h, f"{p}.res")
        m = self._conv(ag.prelu(skips, self.params["mask.prelu"]), "mask")
        m = ag.sigmoid(m).reshape((nb, cfg.S, cfg.N, F))
        if mask_hook is not None:
            m = mask_hook(m)
        return m if batched else m.reshape(m.shape[1:])

    def decode(self, masked, out_len):
        """Latent [N, F] (or [batch, N, F]) -> waveform of exactly ``out_len`` samples."""
        cfg = self.config
        F = masked.shape[-1]
        lo = (out_len - cfg.L) // cfg.stride + 1
        hi = -(-(out_len - cfg.L) // cfg.stride) + 1
        if out_len < cfg.L or F not in (lo, hi):
            raise ShapeError("decode", "out_len", out_len, f"a length consistent with {F} frames")
        batched = masked.ndim == 3
        z = masked if batched else masked.reshape((1,) + masked.shape)
        y = ag.conv_transpose1d(z, self.params["decoder.weight"], stride=cfg.stride)
        n = y.shape[-1]
        y = y[:, 0, :out_len] if n >= out_len else ag.pad_last(y[:, 0, :], 0, out_len - n)
        return y if batched else y.reshape((out_len,))

    def padded_length(self, n):
        cfg = self.config
        return cfg.L + cfg.stride * max(0, -(-(n - cfg.L) // cfg.stride))

    def forward(self, x, mask_hook=None):
        """Mixture [T] -> estimates [S, T]; batched [batch, T] -> [batch, S, T].

        The input is zero-padded at the end to a whole number of frames and the
        outputs are trimmed back to ``T``.
        """
        cfg = self.config
        x = ag.as_tensor(x)
        T = x.shape[-1]
        if T < cfg.L:
            raise ShapeError("conv_tasnet_forward", "signal length", T, f">= L = {cfg.L} samples")
        Tp = self.padded_length(T)
        xp = ag.pad_last(x, 0, Tp - T) if Tp > T else x
        batched = x.ndim == 2
        xb = xp if batched else xp.reshape((1, Tp))
        w = self.encode(xb)
        m = self.separate_masks(w, mask_hook)
        nb, S, N, F = m.shape
        masked = ag.stack([m[:, s] * w for s in range(S)], axis=1).reshape((nb * S, N, F))
        y = self.decode(masked, Tp).reshape((nb, S, Tp))
        if Tp > T:
            y = y[:, :, :T]
        return y if batched else y.reshape((S, T))

    __call__ = forward


def conv_tasnet_forward(model, x):
    """Separate a :class:`Waveform` (or array) into ``S`` waveforms of the same length."""
    from .dataio import Waveform
    if isinstance(x, Waveform):
        with ag.no_grad():
            y = model.forward(Tensor(x.samples.astype(model.dtype)))
        return [Waveform(np.asarray(y.data[s], dtype=np.float64), x.sample_rate) for s in range(y.shape[0])]
    return model.forward(x)
