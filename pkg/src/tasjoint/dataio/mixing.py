"""Two-speaker mixing at a target signal-to-signal ratio."""
from __future__ import annotations

import numpy as np

from .wav import MixtureExample, Waveform


def power(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def snr_scale(s1, s2, snr_db):
    """Amplitude factor for ``s2`` so that P(s1) / P(a * s2) hits ``snr_db`` on the overlap."""
    n = min(len(s1), len(s2))
    p1 = power(np.asarray(s1)[:n])
    p2 = power(np.asarray(s2)[:n])
    if p1 == 0.0 or p2 == 0.0:
        raise ValueError("zero-power source over the overlap region; SNR is undefined")
    return float(np.sqrt(p1 / (p2 * 10.0 ** (snr_db / 10.0))))


def measured_snr_db(s1, s2):
    n = min(len(s1), len(s2))
    return 10.0 * np.log10(power(np.asarray(s1)[:n]) / power(np.asarray(s2)[:n]))


def mix_pair(s1, s2, snr_db, variant="max", transcripts=None, id="", quantizer=None):
    """Mix two waveforms; ``variant`` is ``"min"`` (truncate) or ``"max"`` (zero-pad).

    The ratio is defined over the overlapped region, i.e. the first
    ``min(len(s1), len(s2))`` samples.  ``quantizer`` (optional) is applied
    to both scaled sources before summation so that files written on a
    fixed grid still sum exactly to the mixture.
    """
    if s1.sample_rate != s2.sample_rate:
        raise ValueError(f"sample rates differ: {s1.sample_rate} vs {s2.sample_rate}")
    if variant not in ("min", "max"):
        raise ValueError(f"variant must be 'min' or 'max', got {variant!r}")
    a = np.asarray(s1.samples, dtype=np.float64)
    b = np.asarray(s2.samples, dtype=np.float64) * snr_scale(s1.samples, s2.samples, snr_db)
    if variant == "min":
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
    else:
        n = max(len(a), len(b))
        a = np.pad(a, (0, n - len(a)))
        b = np.pad(b, (0, n - len(b)))
    if quantizer is not None:
        a, b = quantizer(a), quantizer(b)
    sr = s1.sample_rate
    sources = [Waveform(a, sr), Waveform(b, sr)]
    return MixtureExample(
        mixture=Waveform(a + b, sr),
        sources=sources,
        transcripts=list(transcripts) if transcripts is not None else [[], []],
        id=id,
        mix_snr_db=float(snr_db),
        meta={"variant": variant, "source_lengths": [len(s1), len(s2)]},
    )
