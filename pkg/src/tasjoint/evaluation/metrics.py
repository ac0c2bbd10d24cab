"""Word/character error rates and signal metrics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..losses import si_snr_value


@dataclass(frozen=True)
class EditCounts:
    subs: int
    ins: int
    dels: int
    ref_len: int

    @property
    def errors(self):
        return self.subs + self.ins + self.dels

    def __add__(self, other):
        return EditCounts(self.subs + other.subs, self.ins + other.ins,
                          self.dels + other.dels, self.ref_len + other.ref_len)


def edit_distance(hyp, ref):
    """Levenshtein alignment of ``hyp`` against ``ref`` as ``(subs, ins, dels)``.

    Among equal-cost alignments the backtrace prefers a substitution, then an
    insertion, then a deletion.
    """
    hyp, ref = list(hyp), list(ref)
    n, m = len(hyp), len(ref)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]), d[i - 1, j] + 1, d[i, j - 1] + 1)
    subs = ins = dels = 0
    i, j = n, m
    while i or j:
        if i and j and d[i, j] == d[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]):
            subs += hyp[i - 1] != ref[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i, j] == d[i - 1, j] + 1:
            ins += 1
            i -= 1
        else:
            dels += 1
            j -= 1
    return subs, ins, dels


def edit_counts(hyp, ref):
    return EditCounts(*edit_distance(hyp, ref), ref_len=len(ref))


def error_rate(counts):
    if counts.ref_len == 0:
        raise ValueError("error rate undefined for an empty reference")
    return counts.errors / counts.ref_len


def wer(hyp, ref):
    return error_rate(edit_counts(hyp, ref))


def characters(words):
    return list(" ".join(words))


def min_perm_counts(hyps, refs, unit="word"):
    """Best stream-to-reference assignment by total errors.

    Returns ``(EditCounts, mapping)``; ``mapping[i]`` is the reference used for
    hypothesis ``i``.  Ties go to the lexicographically first permutation.
    """
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses for {len(refs)} references")
    split = characters if unit == "char" else list
    best = None
    for perm in itertools.permutations(range(len(refs))):
        c = EditCounts(0, 0, 0, 0)
        for i, j in enumerate(perm):
            c = c + edit_counts(split(hyps[i]), split(refs[j]))
        if best is None or c.errors < best[0].errors:
            best = (c, perm)
    return best


def min_perm_wer(hyps, refs):
    counts, perm = min_perm_counts(hyps, refs)
    return error_rate(counts), perm


def cer(hyps, refs):
    counts, _ = min_perm_counts(hyps, refs, unit="char")
    return error_rate(counts)


def sdr_scale_projection(est, ref):
    """SDR with the optimal scaling of the reference and no mean removal."""
    return si_snr_value(est, ref, zero_mean=False)
