"""SI-SNR, permutation-invariant assignment and the weighted joint objective."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .backend.ctc import InfeasibleAlignmentError, ctc_loss

SNR_CLAMP_DB = 60.0
SNR_EPS = 1e-8
MAX_SOURCES = 6

# (alpha, beta) per fine-tuning mode.
MODE_WEIGHTS = {"a": (0.0, 1.0), "b": (1.0, 0.0), "c": (0.5, 1.0),
                "pretrain-fe": (1.0, 0.0), "pretrain-asr": (0.0, 1.0)}


@dataclass
class PermutationAssignment:
    """``mapping[i]`` is the reference index assigned to estimate ``i``."""

    mapping: tuple
    criterion: str
    value: float

    def __post_init__(self):
        self.mapping = tuple(int(i) for i in self.mapping)
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValueError(f"not a bijection: {self.mapping}")

    def apply(self, refs):
        """Reorder ``refs`` so that entry ``i`` belongs to estimate ``i``."""
        return [refs[j] for j in self.mapping]


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    x = getattr(x, "samples", x)
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def si_snr(est, ref, eps=SNR_EPS, zero_mean=True, clamp=SNR_CLAMP_DB):
    """Scale-invariant SNR in dB as a scalar tensor, clamped to ``[-clamp, clamp]``.

    ``eps`` regularises the ratio relative to the estimate's energy, so
    rescaling ``est`` leaves the value unchanged at any amplitude.  ``est``
    may require grad; ``ref`` is treated as given.  With ``zero_mean=False``
    this is the plain scale-projection SDR.
    """
    est = _as_tensor(est)
    ref = _as_tensor(ref, est.dtype)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeError("si_snr", "signal shape", est.shape, ref.shape)
    if zero_mean:
        est = est - ag.mean(est)
        ref = ref - ag.mean(ref)
    ref_energy = float(np.sum(np.square(ref.data, dtype=np.float64)))
    if ref_energy == 0.0:
        raise ValueError("si_snr: zero-power reference")
    if not np.any(est.data):
        # A silent estimate carries no target at all.
        return Tensor(np.asarray(-clamp, dtype=est.dtype))
    target = ref * (ag.sum(est * ref) / ref_energy)
    noise = est - target
    floor = ag.sum(ag.square(est)) * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (ag.sum(ag.square(target)) + floor) / (ag.sum(ag.square(noise)) + floor)
        db = ag.log(ratio) * (10.0 / math.log(10.0))
    return ag.clip(db, -clamp, clamp)


def si_snr_value(est, ref, **kw):
    with ag.no_grad():
        return float(si_snr(np.asarray(getattr(est, "samples", est), dtype=np.float64),
                            np.asarray(getattr(ref, "samples", ref), dtype=np.float64), **kw).item())


def _rows(x):
    if isinstance(x, Tensor) and x.ndim == 2:
        return [x[i] for i in range(x.shape[0])]
    return list(x)


def _best_permutation(score):
    """Lexicographically first permutation minimising ``score(perm)``."""
    best, best_val = None, math.inf
    for perm in itertools.permutations(range(score.n)):
        val = score(perm)
        if val < best_val:
            best, best_val = perm, val
    return best, best_val


def pit_signal_loss(ests, refs, eps=SNR_EPS, zero_mean=True):
    """Permutation-invariant negative mean SI-SNR.

    Returns ``(L_FE, assignment)``; ``L_FE`` is a scalar tensor carrying the
    gradient of the winning assignment.
    """
    ests, refs = _rows(ests), _rows(refs)
    S = len(ests)
    if len(refs) != S:
        raise ShapeError("pit_signal_loss", "source count", len(ests), len(refs))
    if not 1 <= S <= MAX_SOURCES:
        raise ValueError(f"pit_signal_loss supports 1..{MAX_SOURCES} sources, got {S}")
    pair = [[si_snr(e, r, eps=eps, zero_mean=zero_mean) for r in refs] for e in ests]
    vals = [[p.item() for p in row] for row in pair]

    # Terms are added in value order so the float result does not depend on
    # how the estimates or references happen to be listed.
    def ordered(perm):
        return sorted(range(S), key=lambda i: vals[i][perm[i]])

    def score(perm):
        total = 0.0
        for i in ordered(perm):
            total += vals[i][perm[i]]
        return -total / S
    score.n = S

    perm, val = _best_permutation(score)
    order = ordered(perm)
    total = pair[order[0]][perm[order[0]]]
    for i in order[1:]:
        total = total + pair[i][perm[i]]
    return ag.div(-total, float(S)), PermutationAssignment(perm, "signal", val)


def pi_ctc_assign(log_probs, label_sets, blank=0):
    """Assignment of label sequences to streams minimising the summed CTC loss."""
    log_probs, label_sets = list(log_probs), list(label_sets)
    S = len(log_probs)
    if len(label_sets) != S:
        raise ShapeError("pi_ctc_assign", "stream count", S, len(label_sets))
    if not 1 <= S <= MAX_SOURCES:
        raise ValueError(f"pi_ctc_assign supports 1..{MAX_SOURCES} streams, got {S}")
    cost = np.full((S, S), math.inf)
    with ag.no_grad():
        for i, lp in enumerate(log_probs):
            lp = _as_tensor(lp)
            for j, labels in enumerate(label_sets):
                try:
                    cost[i, j] = ctc_loss(lp, labels, blank).item()
                except InfeasibleAlignmentError:
                    pass

    def score(perm):
        return sum(cost[i, perm[i]] for i in range(S))
    score.n = S

    perm, val = _best_permutation(score)
    if perm is None:
        raise InfeasibleAlignmentError("no stream/label assignment admits a CTC alignment")
    return PermutationAssignment(perm, "ctc", float(val))


def joint_loss(alpha, beta, l_fe, l_asr):
    """``alpha * L_FE + beta * L_ASR``; zero-weighted terms are dropped from the graph."""
    if alpha < 0 or beta < 0:
        raise ValueError("loss weights must be non-negative")
    if alpha == 0 and beta == 0:
        raise ValueError("alpha and beta cannot both be zero")
    terms = []
    if alpha:
        terms.append(l_fe if alpha == 1 else l_fe * alpha)
    if beta:
        terms.append(l_asr if beta == 1 else l_asr * beta)
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


def mode_weights(mode):
    try:
        return MODE_WEIGHTS[mode]
    except KeyError:
        raise ValueError(f"unknown fine-tuning mode {mode!r}; expected one of {sorted(MODE_WEIGHTS)}") from None


@dataclass
class LossReport:
    l_fe: float
    l_ctc: float
    l_att: float
    l_asr: float
    total: float
    alpha: float
    beta: float
    lam: float
    permutations: list = field(default_factory=list)

    @classmethod
    def build(cls, l_fe, l_ctc, l_att, alpha, beta, lam, permutations=()):
        l_asr = lam * l_ctc + (1 - lam) * l_att
        return cls(l_fe, l_ctc, l_att, l_asr, alpha * l_fe + beta * l_asr, alpha, beta, lam,
                   [list(p) for p in permutations])

    def check(self, tol=1e-9):
        scale = max(1.0, abs(self.l_asr), abs(self.total))
        ok_asr = abs(self.l_asr - (self.lam * self.l_ctc + (1 - self.lam) * self.l_att)) <= tol * scale
        ok_total = abs(self.total - (self.alpha * self.l_fe + self.beta * self.l_asr)) <= tol * scale
        return ok_asr and ok_total

    def to_record(self):
        return asdict(self)
