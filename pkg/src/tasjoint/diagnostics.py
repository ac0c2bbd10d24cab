"""Finite-difference checks of every differentiable op and of the composed models."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd.gradcheck import gradcheck
from .backend.ctc import ctc_loss
from .backend.features import LogMel
from .backend.model import AsrConfig, AsrModel
from .frontend import ConvTasNet, SeparatorConfig
from .losses import joint_loss, pit_signal_loss, si_snr
from .seeding import rng_for

OP_TOLERANCE = 1e-4
COMPOSITE_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error < self.tolerance)


def tiny_separator_config(norm="gln"):
    return SeparatorConfig(N=4, L=4, B=3, H=4, P=3, X=2, R=1, S=2, norm=norm)


def tiny_asr_config():
    return AsrConfig(n_mels=6, win_length=32, hop_length=16, conv_channels=(3, 3), rnn_hidden=3, enc_dim=4,
                     emb_dim=3, dec_hidden=3, att_dim=4, vocab=["a", "b", "c"])


def _with_params(model, names, fn):
    """Wrap ``fn(model, *rest)`` so the listed parameters become explicit inputs."""
    def wrapped(*tensors):
        saved = {n: model.params[n] for n in names}
        try:
            for n, t in zip(names, tensors):
                model.params[n] = t
            return fn(model, *tensors[len(names):])
        finally:
            model.params.update(saved)
    return wrapped


def _op_cases(rng):
    def r(*shape):
        return rng.standard_normal(shape)

    def pos(*shape):
        return rng.uniform(0.5, 2.0, shape)

    def away(*shape):
        x = r(*shape)
        return np.where(np.abs(x) < 0.1, 0.3, x)

    ctc_labels = [1, 2, 2]
    return [
        ("add (broadcast)", lambda a, b: a + b, [r(3, 4), r(4)]),
        ("sub", lambda a, b: a - b, [r(3, 4), r(3, 4)]),
        ("mul (broadcast)", lambda a, b: a * b, [r(2, 3, 4), r(3, 4)]),
        ("div", lambda a, b: a / b, [r(3, 4), pos(3, 4)]),
        ("square", ag.square, [r(5)]),
        ("sqrt", ag.sqrt, [pos(5)]),
        ("exp", ag.exp, [r(5)]),
        ("log", ag.log, [pos(5)]),
        ("tanh", ag.tanh, [r(5)]),
        ("sigmoid", ag.sigmoid, [r(5)]),
        ("relu", ag.relu, [away(6)]),
        ("prelu", ag.prelu, [away(6), np.array([0.25])]),
        ("clip", lambda a: ag.clip(a, -0.5, 0.5), [np.array([-1.0, -0.3, 0.2, 0.9])]),
        ("matmul", ag.matmul, [r(3, 4), r(4, 2)]),
        ("matmul (batched)", ag.matmul, [r(2, 3, 4), r(4, 2)]),
        ("affine", ag.affine, [r(3, 4), r(4, 2), r(2)]),
        ("sum (axis)", lambda a: ag.sum(a, axis=1), [r(3, 4)]),
        ("mean", ag.mean, [r(3, 4)]),
        ("log_softmax", ag.log_softmax, [r(3, 5)]),
        ("softmax", ag.softmax, [r(3, 5)]),
        ("reshape/transpose", lambda a: ag.transpose(a.reshape((4, 3))), [r(3, 4)]),
        ("getitem (slice)", lambda a: a[1:, ::2], [r(3, 4)]),
        ("getitem (fancy)", lambda a: a[[0, 2, 0]], [r(3, 4)]),
        ("concat", lambda a, b: ag.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        ("stack", lambda a, b: ag.stack([a, b], axis=0), [r(2, 3), r(2, 3)]),
        ("take_rows", lambda t: ag.take_rows(t, [0, 2, 2, 1]), [r(3, 4)]),
        ("pick", lambda a: ag.pick(a, [1, 0, 3]), [r(3, 4)]),
        ("pad_last", lambda a: ag.pad_last(a, 2, 1), [r(2, 3)]),
        ("conv1d", lambda x, w, b: ag.conv1d(x, w, b, padding=1), [r(2, 3, 9), r(4, 3, 3), r(4)]),
        ("conv1d (stride 2)", lambda x, w: ag.conv1d(x, w, stride=2), [r(1, 9), r(3, 1, 4)]),
        ("conv1d (dilated, depthwise)", lambda x, w, b: ag.conv1d(x, w, b, dilation=2, padding=2, groups=3),
         [r(3, 10), r(3, 1, 3), r(3)]),
        ("conv1d (grouped)", lambda x, w: ag.conv1d(x, w, groups=2), [r(4, 7), r(4, 2, 2)]),
        ("conv1d (1x1)", lambda x, w, b: ag.conv1d(x, w, b), [r(2, 3, 5), r(4, 3, 1), r(4)]),
        ("conv_transpose1d", lambda x, w: ag.conv_transpose1d(x, w, stride=2), [r(2, 3, 5), r(3, 1, 4)]),
        ("global_layer_norm", ag.global_layer_norm, [r(2, 3, 5), pos(3), r(3)]),
        ("frame_layer_norm", ag.frame_layer_norm, [r(2, 3, 5), pos(3), r(3)]),
        ("lstm_sequence", ag.lstm_sequence, [r(4, 8) * 0.5, r(2, 8) * 0.5]),
        ("lstm_sequence (reverse)", lambda x, w: ag.lstm_sequence(x, w, reverse=True),
         [r(4, 8) * 0.5, r(2, 8) * 0.5]),
        ("ctc_loss", lambda a: ctc_loss(ag.log_softmax(a), ctc_labels), [r(7, 4)]),
        ("logmel", LogMel(n_mels=5, win_length=16, hop_length=8, sample_rate=8000), [r(48)]),
        ("si_snr", lambda e: si_snr(e, np.sin(np.arange(32) * 0.3)), [r(32)]),
        ("pit_signal_loss", lambda e: pit_signal_loss(e, [np.sin(np.arange(20) * 0.4),
                                                          np.cos(np.arange(20) * 1.1)])[0], [r(2, 20)]),
    ]


def _composite_cases(rng):
    sep = ConvTasNet(tiny_separator_config(), seed=1)
    asr = AsrModel(tiny_asr_config(), seed=1)
    T = 24
    mix = rng.standard_normal(T)
    refs = [np.sin(np.arange(T) * 0.7), rng.standard_normal(T)]
    sep_names = ["encoder.weight", "blocks.1.dconv.weight", "mask.weight", "decoder.weight", "blocks.0.prelu1"]

    def sep_loss(model, x):
        return pit_signal_loss(model(x), refs)[0]

    wav = rng.standard_normal(160)
    asr_names = ["enc.conv1.weight", "enc.lstm_bwd.hh", "ctc.weight", "dec.embed", "dec.hidden.weight"]

    def asr_fn(model, x):
        return model.loss(x, ["a", "c", "c"], lam=0.3)

    jT = 96
    jmix = rng.standard_normal(jT)
    jrefs = [np.sin(np.arange(jT) * 0.5), np.cos(np.arange(jT) * 0.21)]

    def joint_fn(x):
        est = sep(x)
        l_fe, perm = pit_signal_loss(est, jrefs)
        words = perm.apply([["a", "b"], ["c"]])
        l_asr = asr.loss(est[0], words[0], lam=0.3) + asr.loss(est[1], words[1], lam=0.3)
        return joint_loss(0.5, 1.0, l_fe, l_asr)

    def p(model, names):
        return [model.params[n].data.copy() for n in names]

    return [
        ("separator + PIT SI-SNR", _with_params(sep, sep_names, sep_loss), p(sep, sep_names) + [mix]),
        ("recognizer CTC/attention loss", _with_params(asr, asr_names, asr_fn), p(asr, asr_names) + [wav]),
        ("joint loss through both models", joint_fn, [jmix]),
    ]


def run_gradcheck_suite(seed=0):
    """Run every check; returns a list of :class:`CheckResult`."""
    results = []
    for group, tol in ((_op_cases, OP_TOLERANCE), (_composite_cases, COMPOSITE_TOLERANCE)):
        rng = rng_for(seed, "gradcheck", group.__name__)
        for name, fn, inputs in group(rng):
            t0 = time.perf_counter()
            try:
                err = gradcheck(fn, inputs, seed=seed)
            except Exception:  # noqa: BLE001 - reported as a failed check
                err = float("inf")
            results.append(CheckResult(name, err, tol, time.perf_counter() - t0))
    return results
