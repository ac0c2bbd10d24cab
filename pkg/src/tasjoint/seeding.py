"""Labelled RNG streams derived from one master seed."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed, *labels):
    h = hashlib.sha256(str(int(seed)).encode())
    for label in labels:
        h.update(b"\x00" + str(label).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(seed, *labels):
    """Independent generator for ``(seed, labels...)``; order of creation is irrelevant."""
    return np.random.default_rng(derive_seed(seed, *labels))
