"""16-bit PCM mono WAV I/O and the in-memory audio records."""
from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

_SCALE = 32768.0


class WavError(ValueError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class ChannelCountError(WavError):
    pass


class CorruptHeaderError(WavError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be 1-D")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class MixtureExample:
    mixture: Waveform
    sources: list
    transcripts: list
    id: str = ""
    mix_snr_db: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.sources) != len(self.transcripts):
            raise ValueError("need one transcript per source")

    @property
    def num_sources(self):
        return len(self.sources)


def quantize(samples):
    """Round onto the 16-bit grid; the result is exactly what :func:`write_wav` stores."""
    ints = np.clip(np.round(np.asarray(samples, dtype=np.float64) * _SCALE), -32768, 32767)
    return ints / _SCALE


def write_wav(path, wav, normalize=False):
    """Write ``wav`` as 16-bit PCM mono.

    With ``normalize`` a signal whose peak exceeds 1 is scaled to peak 1;
    otherwise samples outside [-1, 1] are clipped.
    """
    x = np.asarray(wav.samples, dtype=np.float64)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if normalize and peak > 1.0:
        x = x / peak
    ints = np.clip(np.round(x * _SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(wav.sample_rate))
        fh.writeframes(ints.tobytes())


def read_wav(path, dtype=np.float64):
    try:
        fh = wave.open(str(path), "rb")
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise CorruptHeaderError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise CorruptHeaderError(f"{path}: truncated header") from exc
    with fh:
        if fh.getnchannels() != 1:
            raise ChannelCountError(f"{path}: expected mono, found {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise UnsupportedEncodingError(f"{path}: expected 16-bit PCM, found {8 * fh.getsampwidth()}-bit")
        n = fh.getnframes()
        raw = fh.readframes(n)
        rate = fh.getframerate()
    if len(raw) != 2 * n:
        raise CorruptHeaderError(f"{path}: header declares {n} frames, found {len(raw) // 2}")
    samples = np.frombuffer(raw, dtype="<i2").astype(dtype) / _SCALE
    return Waveform(samples, rate)
