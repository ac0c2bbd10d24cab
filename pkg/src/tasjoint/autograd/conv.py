"""Convolutions and normalizations over ``[C, T]`` or ``[batch, C, T]`` tensors."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, make_node


def conv_out_len(T, K, stride=1, dilation=1, padding=0):
    return (T + 2 * padding - dilation * (K - 1) - 1) // stride + 1


def _as3d(x):
    return (x[None], True) if x.ndim == 2 else (x, False)


def _windows(xpad, K, stride, dilation, T_out):
    """View ``xpad[b, c, t*stride + k*dilation]`` with shape [b, c, K, T_out]."""
    b, c, _ = xpad.shape
    s0, s1, s2 = xpad.strides
    return np.lib.stride_tricks.as_strided(
        xpad, shape=(b, c, K, T_out), strides=(s0, s1, s2 * dilation, s2 * stride),
        writeable=False)


def _scatter_windows(dwin, T_pad, stride, dilation):
    """Adjoint of :func:`_windows`: overlap-add ``dwin[b, c, k, t]`` into a signal."""
    b, c, K, T_out = dwin.shape
    out = np.zeros((b, c, T_pad), dtype=dwin.dtype)
    span = stride * (T_out - 1) + 1
    for k in range(K):
        out[:, :, k * dilation:k * dilation + span:stride] += dwin[:, :, k, :]
    return out


def conv1d(x, weight, bias=None, stride=1, dilation=1, padding=0, groups=1):
    """1-D cross-correlation.

    x: [C_in, T] or [batch, C_in, T]; weight: [C_out, C_in // groups, K].
    Depthwise convolution is ``groups == C_in == C_out``.
    """
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv1d: stride and dilation must be >= 1, padding >= 0")
    if x.ndim not in (2, 3):
        raise ShapeError("conv1d", "input rank", x.ndim, "2 or 3")
    if weight.ndim != 3:
        raise ShapeError("conv1d", "kernel rank", weight.ndim, 3)
    xd, squeeze = _as3d(x.data)
    wd = weight.data
    nb, C_in, T = xd.shape
    C_out, C_g, K = wd.shape
    if C_in % groups or C_out % groups:
        raise ShapeError("conv1d", "groups", groups, f"a divisor of {C_in} and {C_out}")
    if C_g != C_in // groups:
        raise ShapeError("conv1d", "input channels", C_in, C_g * groups)
    if bias is not None and bias.shape != (C_out,):
        raise ShapeError("conv1d", "bias", bias.shape, (C_out,))
    if T + 2 * padding < dilation * (K - 1) + 1:
        raise ShapeError("conv1d", "time length", T, f">= {dilation * (K - 1) + 1 - 2 * padding}")
    T_out = conv_out_len(T, K, stride, dilation, padding)
    xpad = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = _windows(xpad, K, stride, dilation, T_out)

    if groups == 1:
        w2 = wd.reshape(C_out, C_in * K)
        if K == 1 and stride == 1:
            cols = xpad
        else:
            cols = win.reshape(nb, C_in * K, T_out)
        out = np.matmul(w2, cols)
    elif groups == C_in and C_out == C_in:
        out = np.einsum("bckt,ck->bct", win, wd[:, 0, :], optimize=True)
    else:
        wg = wd.reshape(groups, C_out // groups, C_g, K)
        wing = win.reshape(nb, groups, C_g, K, T_out)
        out = np.einsum("bgckt,gock->bgot", wing, wg, optimize=True).reshape(nb, C_out, T_out)
    if bias is not None:
        out = out + bias.data[:, None]

    def back(g):
        g3 = g[None] if squeeze else g
        gx = gw = gb = None
        if x.requires_grad:
            if groups == 1:
                if K == 1 and stride == 1:
                    gpad = np.matmul(w2.T, g3)
                else:
                    dcols = np.matmul(w2.T, g3).reshape(nb, C_in, K, T_out)
                    gpad = _scatter_windows(dcols, xpad.shape[-1], stride, dilation)
            elif groups == C_in and C_out == C_in:
                dwin = g3[:, :, None, :] * wd[:, 0, :][None, :, :, None]
                gpad = _scatter_windows(dwin, xpad.shape[-1], stride, dilation)
            else:
                dwin = np.einsum("bgot,gock->bgckt", g3.reshape(nb, groups, C_out // groups, T_out),
                                 wg, optimize=True).reshape(nb, C_in, K, T_out)
                gpad = _scatter_windows(dwin, xpad.shape[-1], stride, dilation)
            gx = gpad[:, :, padding:padding + T] if padding else gpad
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            if groups == 1:
                if K == 1 and stride == 1:
                    gw = np.einsum("bot,bct->oc", g3, xpad, optimize=True)[:, :, None]
                else:
                    gw = np.einsum("bot,bckt->ock", g3, win, optimize=True)
            elif groups == C_in and C_out == C_in:
                gw = np.einsum("bct,bckt->ck", g3, win, optimize=True)[:, None, :]
            else:
                gw = np.einsum("bgot,bgckt->gock", g3.reshape(nb, groups, C_out // groups, T_out),
                               win.reshape(nb, groups, C_g, K, T_out),
                               optimize=True).reshape(C_out, C_g, K)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    saved = []
    if weight.requires_grad:
        saved.append(xpad)
    if x.requires_grad:
        saved.append(wd)
    return make_node(out[0] if squeeze else out, parents, back, saved)


def conv_transpose1d(x, weight, stride=1):
    """Transposed 1-D convolution (strided overlap-add synthesis).

    x: [C_in, T] or [batch, C_in, T]; weight: [C_in, C_out, K].
    Output length is ``(T - 1) * stride + K``.
    """
    if stride < 1:
        raise ValueError("conv_transpose1d: stride must be >= 1")
    if x.ndim not in (2, 3):
        raise ShapeError("conv_transpose1d", "input rank", x.ndim, "2 or 3")
    xd, squeeze = _as3d(x.data)
    wd = weight.data
    nb, C_in, T = xd.shape
    if weight.ndim != 3 or wd.shape[0] != C_in:
        raise ShapeError("conv_transpose1d", "input channels", C_in,
                         wd.shape[0] if weight.ndim == 3 else "3-D kernel")
    _, C_out, K = wd.shape
    T_out = (T - 1) * stride + K
    # frames[b, o, k, t] = sum_c w[c, o, k] x[b, c, t]
    wr = wd.reshape(C_in, C_out * K).T
    frames = np.matmul(wr, xd).reshape(nb, C_out, K, T)
    out = _scatter_windows(frames, T_out, stride, 1)

    def back(g):
        g3 = g[None] if squeeze else g
        gwin = _windows(np.ascontiguousarray(g3), K, stride, 1, T)
        gx = gw = None
        if x.requires_grad:
            gx = np.matmul(wr.T, gwin.reshape(nb, C_out * K, T))
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            gw = np.einsum("bct,bokt->cok", xd, gwin, optimize=True)
        return gx, gw

    saved = []
    if weight.requires_grad:
        saved.append(xd)
    if x.requires_grad:
        saved.append(wd)
    return make_node(out[0] if squeeze else out, (x, weight), back, saved)


def _layer_norm(x, gain, bias, eps, axes, name):
    xd = x.data
    C = xd.shape[-2]
    if gain.shape != (C,) or bias.shape != (C,):
        raise ShapeError(name, "gain/bias", (gain.shape, bias.shape), (C,))
    if eps <= 0:
        raise ValueError(f"{name}: eps must be > 0")
    mu = xd.mean(axis=axes, keepdims=True)
    var = xd.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    gd = gain.data[:, None]
    out = gd * xhat + bias.data[:, None]
    red = tuple(i for i in range(xd.ndim) if i != xd.ndim - 2)

    def back(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gd
            gx = inv * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
        gg = (g * xhat).sum(axis=red) if gain.requires_grad else None
        gbias = g.sum(axis=red) if bias.requires_grad else None
        return gx, gg, gbias

    return make_node(out, (x, gain, bias), back, (xhat, inv, gain.data))


def global_layer_norm(x, gain, bias, eps=1e-8):
    """Normalize with one mean/variance over all channels and frames (per batch item)."""
    return _layer_norm(x, gain, bias, eps, (-2, -1), "global_layer_norm")


def frame_layer_norm(x, gain, bias, eps=1e-8):
    """Normalize each frame over its channels only; statistics stay time-local."""
    return _layer_norm(x, gain, bias, eps, (-2,), "frame_layer_norm")
