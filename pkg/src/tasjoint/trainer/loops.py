"""Pre-training and joint fine-tuning loops."""
from __future__ import annotations

import time
import warnings
from contextlib import nullcontext
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..backend.model import asr_loss
from ..evaluation.metrics import EditCounts, edit_counts, error_rate
from ..losses import LossReport, joint_loss, pi_ctc_assign, pit_signal_loss, si_snr_value
from ..seeding import rng_for
from .optim import clip_grad_norm, make_optimizer
from .tbptt import plan_chunk, tbptt_forward


@dataclass
class MemoryProbe:
    """Peak bytes held for backward, split by half, and wall time of one step."""

    frontend_bytes: int = 0
    backend_bytes: int = 0
    seconds: float = 0.0

    def merge(self, other):
        return MemoryProbe(max(self.frontend_bytes, other.frontend_bytes),
                           max(self.backend_bytes, other.backend_bytes),
                           self.seconds + other.seconds)


@dataclass
class StepResult:
    step: int
    report: LossReport
    probe: MemoryProbe
    grad_norm: float

    def to_record(self):
        rec = {"step": self.step, "grad_norm": self.grad_norm}
        rec.update(self.report.to_record())
        rec.update(asdict(self.probe))
        return rec


def _emit(log, record):
    if log is not None:
        log(record)


def save_training_state(path, model, optimizer, meta):
    model.save(path, extra=optimizer.state_tensors(f"opt.{model.kind}"), meta=meta)


def load_training_state(path, model, optimizer):
    extra, meta = model.load(path)
    optimizer.load_state_tensors(extra, f"opt.{model.kind}")
    return meta


class _Frozen:
    """Temporarily stop gradient bookkeeping for the given parameters."""

    def __init__(self, params):
        self.params = list(params)

    def __enter__(self):
        self.flags = [p.requires_grad for p in self.params]
        for p in self.params:
            p.requires_grad = False

    def __exit__(self, *exc):
        for p, f in zip(self.params, self.flags):
            p.requires_grad = f


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size].tolist() for i in range(0, n, batch_size)]


# -- separator pre-training --------------------------------------------------

def _crop_batch(examples, crop, batch_size, rng, dtype):
    idx = rng.choice(len(examples), size=batch_size, replace=len(examples) < batch_size)
    mix, src = [], []
    for i in idx:
        ex = examples[int(i)]
        start = int(rng.integers(len(ex.mixture) - crop + 1))
        mix.append(ex.mixture.samples[start:start + crop])
        src.append(np.stack([s.samples[start:start + crop] for s in ex.sources]))
    return np.stack(mix).astype(dtype), np.stack(src).astype(dtype)


def separator_dev_metrics(model, examples):
    """Mean SI-SNR and SI-SNR improvement of full-length separation."""
    snr, imp = [], []
    with ag.no_grad():
        for ex in examples:
            est = model(Tensor(ex.mixture.samples.astype(model.dtype)))
            refs = [s.samples for s in ex.sources]
            _, perm = pit_signal_loss(Tensor(est.data.astype(np.float64)), refs)
            for i, j in enumerate(perm.mapping):
                v = si_snr_value(est.data[i], refs[j])
                snr.append(v)
                imp.append(v - si_snr_value(ex.mixture.samples, refs[j]))
    return {"si_snr": float(np.mean(snr)), "si_snri": float(np.mean(imp))}


def pretrain_separator(model, train_set, settings, dev_set=None, log=None,
                       checkpoint_dir=None, resume_from=None):
    """Train the separator with PIT SI-SNR on random fixed-length crops.

    Utterances shorter than the crop are skipped with a warning.  Returns the
    list of per-step records.
    """
    settings.validate()
    crop = settings.crop_samples
    usable = [ex for ex in train_set if len(ex.mixture) >= crop]
    if not usable:
        raise ValueError(f"no training mixture is at least {crop} samples long")
    if len(usable) < len(train_set):
        warnings.warn(f"skipping {len(train_set) - len(usable)} mixtures shorter than the "
                      f"{crop}-sample crop", stacklevel=2)
    opt = make_optimizer(settings.optimizer, model.named_parameters(), **settings.kwargs())
    start = 0
    if resume_from is not None:
        start = int(load_training_state(resume_from, model, opt)["step"])
    history = []
    for step in range(start, settings.steps):
        t0 = time.perf_counter()
        mix, src = _crop_batch(usable, crop, settings.batch_size, rng_for(settings.seed, "sep-crop", step),
                               model.dtype)
        est = model(Tensor(mix))
        total = None
        for b in range(len(mix)):
            l_fe, _ = pit_signal_loss(est[b], list(src[b]))
            total = l_fe if total is None else total + l_fe
        loss = total / float(len(mix))
        loss.backward()
        norm = clip_grad_norm(model.parameters(), settings.grad_clip)
        opt.step()
        opt.zero_grad()
        rec = {"phase": "separator", "step": step + 1, "loss": loss.item(), "grad_norm": norm,
               "seconds": time.perf_counter() - t0}
        if dev_set and settings.eval_every and (step + 1) % settings.eval_every == 0:
            rec.update({f"dev_{k}": v for k, v in separator_dev_metrics(model, dev_set).items()})
        history.append(rec)
        _emit(log, rec)
    if checkpoint_dir is not None:
        save_training_state(Path(checkpoint_dir) / "separator.ckpt", model, opt, {"step": settings.steps})
    return history


# -- recognizer pre-training ---------------------------------------------------

def asr_dev_counts(model, utterances):
    total = EditCounts(0, 0, 0, 0)
    for _, wav, words in utterances:
        total = total + edit_counts(model.recognize(wav.samples.astype(model.dtype)), words)
    return total


def pretrain_asr(model, train_set, settings, dev_set=None, log=None, checkpoint_dir=None, resume_from=None):
    """Train the recognizer on clean single-speaker utterances ``[(id, Waveform, words)]``."""
    settings.validate()
    if not train_set:
        raise ValueError("empty recognizer training set")
    lam = model.config.lam
    opt = make_optimizer(settings.optimizer, model.named_parameters(), **settings.kwargs())
    first_epoch, step = 0, 0
    if resume_from is not None:
        meta = load_training_state(resume_from, model, opt)
        first_epoch, step = int(meta["epoch"]), int(meta["step"])
    history = []
    for epoch in range(first_epoch, settings.epochs):
        for batch in _batches(len(train_set), settings.batch_size, rng_for(settings.seed, "asr-order", epoch)):
            if settings.max_steps is not None and step >= settings.max_steps:
                break
            t0 = time.perf_counter()
            tot = {"ctc": 0.0, "att": 0.0, "loss": 0.0}
            for i in batch:
                _, wav, words = train_set[i]
                enc = model.encode(Tensor(wav.samples.astype(model.dtype)))
                l_ctc, l_att = model.ctc_loss(enc, words), model.attention_loss(enc, words)
                loss = asr_loss(l_ctc, l_att, lam)
                tot["ctc"] += l_ctc.item() / len(batch)
                tot["att"] += l_att.item() / len(batch)
                tot["loss"] += loss.item() / len(batch)
                (loss / float(len(batch))).backward()
            norm = clip_grad_norm(model.parameters(), settings.grad_clip)
            opt.step()
            opt.zero_grad()
            step += 1
            rec = {"phase": "asr", "epoch": epoch + 1, "step": step, **tot, "grad_norm": norm,
                   "seconds": time.perf_counter() - t0}
            history.append(rec)
            _emit(log, rec)
        if dev_set and settings.eval_every_epoch and (epoch + 1) % settings.eval_every_epoch == 0:
            rec = {"phase": "asr-dev", "epoch": epoch + 1, "step": step,
                   "dev_wer": error_rate(asr_dev_counts(model, dev_set))}
            history.append(rec)
            _emit(log, rec)
        if checkpoint_dir is not None:
            save_training_state(Path(checkpoint_dir) / f"asr-epoch{epoch + 1}.ckpt", model, opt,
                                {"epoch": epoch + 1, "step": step})
    if checkpoint_dir is not None:
        save_training_state(Path(checkpoint_dir) / "asr.ckpt", model, opt,
                            {"epoch": settings.epochs, "step": step})
    return history


# -- joint fine-tuning ------------------------------------------------------------

class JointOptimizers:
    def __init__(self, separator, asr, plan):
        fe, be = plan.trainable()
        self.frontend = (make_optimizer(plan.optimizer, separator.named_parameters(),
                                        **plan.kwargs(plan.frontend_lr)) if fe else None)
        self.backend = make_optimizer(plan.optimizer, asr.named_parameters(), **plan.kwargs()) if be else None

    def active(self):
        return [o for o in (self.frontend, self.backend) if o is not None]


def _example_losses(separator, asr, ex, plan, rng, train_fe):
    alpha, beta = plan.weights()
    if not ex.sources or any(s is None for s in ex.sources):
        raise ValueError(f"{ex.id}: fine-tuning needs reference sources")
    x = Tensor(ex.mixture.samples.astype(separator.dtype))
    refs = [s.samples for s in ex.sources]
    with ag.memory_tag("frontend"):
        if not train_fe:
            with ag.no_grad():
                ests = separator(x)
        elif plan.tbptt_chunk is not None:
            chunk = plan_chunk(separator.config, x.shape[0], plan.tbptt_chunk, rng, plan.chunk_policy)
            ests = tbptt_forward(separator, x, chunk)
        else:
            ests = separator(x)
        with nullcontext() if alpha > 0 else ag.no_grad():
            l_fe, sig_perm = pit_signal_loss(ests, refs)
    asr_grad = beta > 0 and (ests.requires_grad or any(p.requires_grad for p in asr.parameters()))
    with ag.memory_tag("backend"), (nullcontext() if asr_grad else ag.no_grad()):
        encs = [asr.encode(ests[s]) for s in range(ests.shape[0])]
        if plan.perm == "ctc":
            assign = pi_ctc_assign([asr.ctc_log_probs(e) for e in encs],
                                   [asr.vocab.ctc_ids(t) for t in ex.transcripts])
        else:
            assign = sig_perm
        words = assign.apply(ex.transcripts)
        l_ctc = l_att = None
        for enc, w in zip(encs, words):
            c, a = asr.ctc_loss(enc, w), asr.attention_loss(enc, w)
            l_ctc = c if l_ctc is None else l_ctc + c
            l_att = a if l_att is None else l_att + a
        l_asr = asr_loss(l_ctc, l_att, plan.lam)
    total = joint_loss(alpha, beta, l_fe, l_asr)
    return total, (l_fe.item(), l_ctc.item(), l_att.item()), assign.mapping


def finetune_step(separator, asr, batch, plan, optimizers, step=0):
    """One update on ``batch`` (a list of :class:`MixtureExample`).

    Each example is back-propagated on its own and the gradients accumulate
    in batch order; the update touches only the halves the plan trains.
    """
    if not batch:
        raise ValueError("empty batch")
    alpha, beta = plan.weights()
    train_fe, train_be = plan.trainable()
    frozen = ([] if train_fe else separator.parameters()) + ([] if train_be else asr.parameters())
    graph = ag.current_graph()
    probe = MemoryProbe()
    sums = np.zeros(3)
    perms = []
    with _Frozen(frozen):
        for k, ex in enumerate(batch):
            t0 = time.perf_counter()
            graph.reset_peak()
            rng = rng_for(plan.seed, "chunk", step, k)
            total, parts, perm = _example_losses(separator, asr, ex, plan, rng, train_fe)
            peaks = MemoryProbe(graph.peak_by_tag["frontend"], graph.peak_by_tag["backend"], 0.0)
            if total.requires_grad:
                (total / float(len(batch))).backward()
            else:
                graph.release()
            peaks.seconds = time.perf_counter() - t0
            probe = probe.merge(peaks)
            sums += parts
            perms.append(perm)
    trainable = (separator.parameters() if train_fe else []) + (asr.parameters() if train_be else [])
    norm = clip_grad_norm(trainable, plan.grad_clip)
    for opt in optimizers.active():
        opt.step()
    separator.zero_grad()
    asr.zero_grad()
    l_fe, l_ctc, l_att = sums / len(batch)
    report = LossReport.build(l_fe, l_ctc, l_att, alpha, beta, plan.lam, perms)
    return StepResult(step, report, probe, norm)


def finetune(separator, asr, train_set, plan, log=None, checkpoint_dir=None):
    """Run ``plan`` over ``train_set``; returns the per-step records."""
    plan.validate()
    if not train_set:
        raise ValueError("empty fine-tuning set")
    optimizers = JointOptimizers(separator, asr, plan)
    history, step = [], 0
    for epoch in range(plan.epochs):
        for idx in _batches(len(train_set), plan.batch_size, rng_for(plan.seed, "finetune-order", epoch)):
            if plan.max_steps is not None and step >= plan.max_steps:
                break
            res = finetune_step(separator, asr, [train_set[i] for i in idx], plan, optimizers, step)
            step += 1
            rec = {"phase": f"finetune-{plan.mode}", "epoch": epoch + 1, **res.to_record(), "step": step}
            history.append(rec)
            _emit(log, rec)
    if checkpoint_dir is not None:
        d = Path(checkpoint_dir)
        separator.save(d / "separator.ckpt", meta={"step": step})
        asr.save(d / "asr.ckpt", meta={"step": step})
    return history
