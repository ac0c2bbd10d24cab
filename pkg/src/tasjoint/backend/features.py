"""Differentiable log-mel features: windowed DFT as a strided convolution, then a mel matrix."""
from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import ShapeError, Tensor


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_band_edges(n_mels, sample_rate, fmin=0.0, fmax=None):
    """``n_mels + 2`` band edges in Hz; band ``m`` peaks at ``edges[m + 1]``."""
    fmax = sample_rate / 2 if fmax is None else fmax
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels, n_fft, sample_rate, fmin=0.0, fmax=None):
    """Triangular filters with unit peak, shape [n_mels, n_fft // 2 + 1]."""
    edges = mel_band_edges(n_mels, sample_rate, fmin, fmax)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def dft_kernel(win_length):
    """Hann-windowed real/imaginary DFT rows as a conv kernel [2 * bins, 1, win]."""
    n = np.arange(win_length)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * n / win_length)
    k = np.arange(win_length // 2 + 1)[:, None]
    ang = 2 * np.pi * k * n[None, :] / win_length
    kernel = np.concatenate([np.cos(ang) * window, -np.sin(ang) * window])
    return kernel[:, None, :]


class LogMel:
    """``log(mel @ |STFT(x)|^2 + eps)``; gradients flow back to the waveform."""

    def __init__(self, n_mels=80, win_length=256, hop_length=128, sample_rate=8000, eps=1e-10):
        self.n_mels = n_mels
        self.win_length = win_length
        self.hop_length = hop_length
        self.sample_rate = sample_rate
        self.eps = eps
        self.bins = win_length // 2 + 1
        self._kernel = dft_kernel(win_length)
        self._fbank = mel_filterbank(n_mels, win_length, sample_rate)
        self._cache = {}

    def _consts(self, dtype):
        if dtype not in self._cache:
            self._cache[dtype] = (Tensor(self._kernel.astype(dtype)), Tensor(self._fbank.astype(dtype)))
        return self._cache[dtype]

    def num_frames(self, n_samples):
        return (n_samples - self.win_length) // self.hop_length + 1

    def __call__(self, x):
        """Waveform [T] -> features [n_mels, frames]."""
        x = ag.as_tensor(x)
        if x.ndim != 1:
            raise ShapeError("logmel", "input rank", x.ndim, 1)
        if x.shape[0] < self.win_length:
            raise ShapeError("logmel", "signal length", x.shape[0], f">= {self.win_length} samples")
        kernel, fbank = self._consts(x.dtype.type)
        spec = ag.conv1d(x.reshape((1, x.shape[0])), kernel, stride=self.hop_length)
        power = ag.square(spec[:self.bins]) + ag.square(spec[self.bins:])
        return ag.log(fbank @ power + self.eps)


def logmel(x, n_mels=80, win_length=256, hop_length=128, sample_rate=8000, eps=1e-10):
    samples = getattr(x, "samples", x)
    rate = getattr(x, "sample_rate", sample_rate)
    return LogMel(n_mels, win_length, hop_length, rate, eps)(samples)
