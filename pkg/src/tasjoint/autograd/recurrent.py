"""Whole-sequence LSTM as a single differentiable op."""
from __future__ import annotations

import numpy as np

from .ops import _sigmoid
from .tensor import ShapeError, make_node


def lstm_sequence(xproj, w_hh, reverse=False):
    """Run an LSTM over precomputed input projections.

    xproj: [T, 4H] (input @ W_ih + b, gate order i, f, g, o); w_hh: [H, 4H].
    Returns the hidden states [T, H], zero initial state.
    """
    if xproj.ndim != 2 or w_hh.ndim != 2 or xproj.shape[1] != w_hh.shape[1] or w_hh.shape[1] != 4 * w_hh.shape[0]:
        raise ShapeError("lstm_sequence", "gate dim", (xproj.shape, w_hh.shape), "[T, 4H] and [H, 4H]")
    xp = xproj.data
    W = w_hh.data
    T, H4 = xp.shape
    H = H4 // 4
    order = range(T - 1, -1, -1) if reverse else range(T)
    gates = np.empty((T, H4), dtype=xp.dtype)
    cs = np.empty((T, H), dtype=xp.dtype)
    hs = np.empty((T, H), dtype=xp.dtype)
    h = np.zeros(H, dtype=xp.dtype)
    c = np.zeros(H, dtype=xp.dtype)
    for t in order:
        z = xp[t] + h @ W
        ifo = _sigmoid(z[np.r_[0:2 * H, 3 * H:4 * H]])
        gate = gates[t]
        gate[:2 * H] = ifo[:2 * H]
        gate[3 * H:] = ifo[2 * H:]
        gate[2 * H:3 * H] = np.tanh(z[2 * H:3 * H])
        c = gate[H:2 * H] * c + gate[:H] * gate[2 * H:3 * H]
        h = gate[3 * H:] * np.tanh(c)
        cs[t] = c
        hs[t] = h

    def back(g):
        dx = np.empty_like(xp)
        dW = np.zeros_like(W)
        dh_next = np.zeros(H, dtype=xp.dtype)
        dc_next = np.zeros(H, dtype=xp.dtype)
        for t in reversed(list(order)):
            prev = t + 1 if reverse else t - 1
            inside = 0 <= prev < T
            c_prev = cs[prev] if inside else 0.0
            h_prev = hs[prev] if inside else None
            i, f, gg, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
            dh = g[t] + dh_next
            tc = np.tanh(cs[t])
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dx[t]
            dz[:H] = dc * gg * i * (1.0 - i)
            dz[H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            dz[3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = W @ dz
            if h_prev is not None:
                dW += np.outer(h_prev, dz)
        return dx, dW

    return make_node(hs, (xproj, w_hh), back, (gates, cs, hs, W))
