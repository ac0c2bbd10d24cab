"""CTC loss (log-space forward-backward) and greedy CTC decoding."""
from __future__ import annotations

import numpy as np

from ..autograd import ShapeError
from ..autograd.tensor import make_node


class InfeasibleAlignmentError(ValueError):
    pass


def min_frames(labels):
    """Shortest input that can emit ``labels``: one frame per label plus a blank between repeats."""
    labels = list(labels)
    return len(labels) + sum(1 for a, b in zip(labels, labels[1:]) if a == b)


def _logsumexp(*xs):
    m = np.maximum.reduce(xs)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(sum(np.exp(x - safe) for x in xs))


def _shift(v, k):
    """``v`` moved ``k`` places right (``k < 0``: left), padded with -inf."""
    out = np.full_like(v, -np.inf)
    if abs(k) < len(v):
        if k > 0:
            out[k:] = v[:-k]
        else:
            out[:k] = v[-k:]
    return out


def _extend(labels, blank):
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_forward_backward(lp, labels, blank=0):
    """Return ``(log_alpha, log_beta, log_likelihood)`` over the blank-extended labels.

    ``log_alpha[t, s]`` includes the emission at ``t``; ``log_beta[t, s]``
    covers frames ``t+1 ..`` only, so ``alpha + beta`` is the log mass of all
    paths in state ``s`` at ``t``.
    """
    T = lp.shape[0]
    ext = _extend(labels, blank)
    S = len(ext)
    # Skip transition s-2 -> s allowed into non-blank states that differ from s-2.
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    emit = lp[:, ext]
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a1 = _shift(prev, 1)
        a2 = np.where(skip, _shift(prev, 2), -np.inf)
        alpha[t] = _logsumexp(prev, a1, a2) + emit[t]
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    skip_from = np.concatenate([skip[2:], [False, False]])[:S]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        b1 = _shift(nxt, -1)
        b2 = np.where(skip_from, _shift(nxt, -2), -np.inf)
        beta[t] = _logsumexp(nxt, b1, b2)
    ends = [alpha[T - 1, S - 1]] + ([alpha[T - 1, S - 2]] if S > 1 else [])
    ll = float(_logsumexp(*[np.asarray(e) for e in ends]))
    return alpha, beta, ll


def ctc_loss(log_probs, labels, blank=0):
    """Negative log-probability of ``labels`` summed over all CTC alignments.

    log_probs: Tensor [T, V] of per-frame log-probabilities (log-softmax
    output); labels: sequence of class indices, none equal to ``blank``.
    """
    if log_probs.ndim != 2:
        raise ShapeError("ctc_loss", "log_probs rank", log_probs.ndim, 2)
    labels = np.asarray(list(labels), dtype=np.int64)
    T, V = log_probs.shape
    if labels.size and (labels.min() < 0 or labels.max() >= V or np.any(labels == blank)):
        raise ValueError(f"ctc_loss: labels must be non-blank classes in [0, {V})")
    need = min_frames(labels.tolist())
    if T < need:
        raise InfeasibleAlignmentError(f"ctc_loss: {T} frames cannot emit {len(labels)} labels (need {need})")
    lp = log_probs.data.astype(np.float64)
    alpha, beta, ll = ctc_forward_backward(lp, labels, blank)
    ext = _extend(labels, blank)
    dtype = log_probs.dtype

    def back(g):
        occ = np.exp(alpha + beta - ll)
        grad = np.zeros((T, V))
        np.add.at(grad.T, ext, occ.T)
        return ((-grad * g).astype(dtype),)

    return make_node(np.asarray(-ll, dtype=dtype), (log_probs,), back, (alpha, beta))


def greedy_ctc_decode(log_probs, blank=0):
    """Frame-wise argmax, merge repeats, drop blanks."""
    lp = np.asarray(getattr(log_probs, "data", log_probs))
    best = lp.argmax(axis=-1)
    out = []
    prev = None
    for k in best.tolist():
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return out
