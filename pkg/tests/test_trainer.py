import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tasjoint import autograd as ag
from tasjoint.autograd import Tensor
from tasjoint.backend import AsrConfig, AsrModel
from tasjoint.dataio import MixtureExample, Waveform, load_mixtures, load_utterances
from tasjoint.frontend import ConvTasNet, SeparatorConfig, receptive_field
from tasjoint.trainer import (AsrTraining, ChunkPlan, FinetunePlan, JointOptimizers, MemoryProbe,
                              SeparatorTraining, finetune, finetune_step, plan_chunk, pretrain_asr,
                              pretrain_separator, tbptt_forward)

SEP = SeparatorConfig(N=16, L=16, B=8, H=16, P=3, X=3, R=1, norm="fln")
ASR = AsrConfig(n_mels=16, conv_channels=(16,), rnn_hidden=16, enc_dim=16, emb_dim=8, dec_hidden=16, att_dim=16)


def _models(seed=0):
    return ConvTasNet(SEP, seed=seed), AsrModel(ASR, seed=seed)


def _snapshot(model):
    return {k: v.copy() for k, v in model.state_dict().items()}


def _same(a, b):
    return all(a[k].tobytes() == b[k].tobytes() for k in a)


@pytest.fixture(scope="module")
def mixtures(small_corpus):
    return load_mixtures(small_corpus[2]["train_max"])


def _step(plan, batch, seed=0, sep_config=SEP):
    sep, asr = ConvTasNet(sep_config, seed=seed), AsrModel(ASR, seed=seed)
    opts = JointOptimizers(sep, asr, plan.validate())
    before = (_snapshot(sep), _snapshot(asr))
    res = finetune_step(sep, asr, batch, plan, opts)
    return sep, asr, before, res


def test_mode_a_freezes_frontend(mixtures):
    sep, asr, (s0, a0), res = _step(FinetunePlan(mode="a"), mixtures[:2])
    assert _same(s0, _snapshot(sep))
    assert not _same(a0, _snapshot(asr))
    assert res.report.alpha == 0.0 and res.report.beta == 1.0


def test_mode_b_freezes_backend(mixtures):
    sep, asr, (s0, a0), _ = _step(FinetunePlan(mode="b"), mixtures[:2])
    assert _same(a0, _snapshot(asr))
    assert not _same(s0, _snapshot(sep))


def test_recognizer_gradient_reaches_frozen_backend_frontend(mixtures):
    plan = FinetunePlan(mode="b", alpha=0.0, beta=1.0)
    sep, asr, (s0, a0), res = _step(plan, mixtures[:1])
    assert _same(a0, _snapshot(asr))
    assert not _same(s0, _snapshot(sep))
    assert res.grad_norm > 0


@pytest.mark.parametrize("mode", ["a", "b", "c"])
def test_loss_report_identities_hold(mixtures, mode):
    sep, asr = _models()
    plan = FinetunePlan(mode=mode, batch_size=2, max_steps=2)
    records = finetune(sep, asr, mixtures[:4], plan)
    assert len(records) == 2
    for rec in records:
        assert abs(rec["l_asr"] - (rec["lam"] * rec["l_ctc"] + (1 - rec["lam"]) * rec["l_att"])) < 1e-9
        assert abs(rec["total"] - (rec["alpha"] * rec["l_fe"] + rec["beta"] * rec["l_asr"])) < 1e-9


def test_ctc_permutation_criterion_runs(mixtures):
    _, _, _, res = _step(FinetunePlan(mode="a", perm="ctc"), mixtures[:1])
    assert sorted(res.report.permutations[0]) == [0, 1]


def test_finetune_is_deterministic(mixtures):
    runs = []
    for _ in range(2):
        sep, asr = _models()
        plan = FinetunePlan(mode="c", batch_size=2, max_steps=2, tbptt_chunk=1000)
        recs = finetune(sep, asr, mixtures[:4], plan)
        runs.append(([(r["total"], r["l_fe"], r["l_ctc"], r["grad_norm"]) for r in recs],
                     sep.state_dict(), asr.state_dict()))
    assert runs[0][0] == runs[1][0]
    assert _same(runs[0][1], runs[1][1]) and _same(runs[0][2], runs[1][2])


# -- truncated backpropagation -------------------------------------------------------

def test_full_signal_chunk_gives_the_same_update(mixtures):
    ex = mixtures[0]
    full, _, _, r_full = _step(FinetunePlan(mode="c"), [ex])
    chunked, _, _, r_chunk = _step(FinetunePlan(mode="c", tbptt_chunk=len(ex.mixture) + 100), [ex])
    assert r_full.report.total == r_chunk.report.total
    for k, v in full.state_dict().items():
        w = chunked.state_dict()[k]
        assert np.max(np.abs(v - w)) <= 1e-6 * max(1.0, np.max(np.abs(v)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_chunk_interior_matches_full_forward(seed):
    sep = ConvTasNet(SEP, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3000)
    rf = receptive_field(SEP)
    chunk = plan_chunk(SEP, 3000, 1200, rng, policy="interior")
    assert chunk.margin == rf and chunk.start % SEP.stride == 0
    with ag.no_grad():
        full = sep(x).data
        spliced = tbptt_forward(sep, x, chunk).data
    lo, hi = chunk.start + rf, chunk.end - rf
    assert np.max(np.abs(spliced[:, lo:hi] - full[:, lo:hi])) <= 1e-6
    assert np.array_equal(spliced[:, :chunk.start], full[:, :chunk.start])
    assert np.array_equal(spliced[:, chunk.end:], full[:, chunk.end:])


def test_no_gradient_from_outside_the_chunk(rng):
    sep = ConvTasNet(SEP)
    x = rng.normal(size=2000)
    chunk = ChunkPlan(800, 400, 2000)
    y = tbptt_forward(sep, x, chunk)
    ag.sum(ag.square(y[:, :700])).backward()
    assert all(p.grad is None or not np.any(p.grad) for p in sep.parameters())
    sep.zero_grad()
    y = tbptt_forward(sep, x, chunk)
    ag.sum(ag.square(y[:, 900:1000])).backward()
    assert any(p.grad is not None and np.any(p.grad) for p in sep.parameters())


def test_chunk_shorter_than_window_rejected(rng):
    with pytest.raises(ValueError):
        plan_chunk(SEP, 1000, SEP.L - 1, rng)


def test_short_signal_uses_whole_signal(rng):
    plan = plan_chunk(SEP, 300, 500, rng)
    assert plan.is_full and (plan.start, plan.length) == (0, 300)


def test_chunk_plan_rejects_overhang():
    with pytest.raises(ValueError):
        ChunkPlan(10, 100, 105)
    with pytest.raises(ValueError):
        ChunkPlan(-1, 10, 100)


@settings(max_examples=100, deadline=None)
@given(st.integers(16, 5000), st.integers(16, 5000), st.integers(0, 1000), st.sampled_from(["uniform", "interior"]))
def test_chunk_plan_invariants(n, length, seed, policy):
    plan = plan_chunk(SEP, n, length, np.random.default_rng(seed), policy)
    assert 0 <= plan.start and plan.end <= plan.signal_length == n
    assert plan.start % SEP.stride == 0
    if plan.margin:
        assert plan.start >= plan.margin and n - plan.end >= plan.margin


def _frontend_peak(ex, chunk, seed=0):
    plan = FinetunePlan(mode="c", tbptt_chunk=chunk, batch_size=1)
    return _step(plan, [ex], seed, SeparatorConfig())[3].probe


def test_memory_shrinks_with_chunks_and_scales_affinely(mixtures):
    ex = max(mixtures, key=lambda e: len(e.mixture))
    n = len(ex.mixture)
    assert n >= 4 * receptive_field(SeparatorConfig())
    full = _frontend_peak(ex, None)
    lengths = [n // 8, n // 4, n // 2, 3 * n // 4]
    peaks = [_frontend_peak(ex, c).frontend_bytes for c in lengths]
    assert all(p <= full.frontend_bytes for p in peaks)
    assert peaks[1] <= 0.35 * full.frontend_bytes
    slope, icept = np.polyfit(lengths, peaks, 1)
    resid = np.array(peaks) - (slope * np.array(lengths) + icept)
    r2 = 1 - resid @ resid / np.sum((np.array(peaks) - np.mean(peaks)) ** 2)
    assert r2 > 0.99
    assert full.backend_bytes > 0


def test_memory_probe_merge():
    m = MemoryProbe(5, 1, 0.5).merge(MemoryProbe(3, 4, 0.25))
    assert (m.frontend_bytes, m.backend_bytes, m.seconds) == (5, 4, 0.75)


# -- errors ------------------------------------------------------------------------

def test_empty_datasets_rejected():
    sep, asr = _models()
    with pytest.raises(ValueError):
        pretrain_separator(sep, [], SeparatorTraining(steps=1))
    with pytest.raises(ValueError):
        pretrain_asr(asr, [], AsrTraining(epochs=1))
    with pytest.raises(ValueError):
        finetune(sep, asr, [], FinetunePlan())
    with pytest.raises(ValueError):
        finetune_step(sep, asr, [], FinetunePlan(), JointOptimizers(sep, asr, FinetunePlan()))


def test_short_mixtures_skipped_with_warning(mixtures):
    sep, _ = _models()
    crop = sorted(len(e.mixture) for e in mixtures)[1]
    with pytest.warns(UserWarning, match="skipping 1"):
        pretrain_separator(sep, mixtures, SeparatorTraining(steps=1, batch_size=1, crop_samples=crop))
    with pytest.raises(ValueError):
        pretrain_separator(sep, mixtures, SeparatorTraining(steps=1, crop_samples=10 ** 6))


def test_missing_references_rejected(mixtures):
    ex = mixtures[0]
    bare = MixtureExample(ex.mixture, [None, None], ex.transcripts, id="bare")
    sep, asr = _models()
    with pytest.raises(ValueError, match="reference"):
        finetune_step(sep, asr, [bare], FinetunePlan(mode="a"), JointOptimizers(sep, asr, FinetunePlan(mode="a")))


def test_plan_validation():
    with pytest.raises(ValueError):
        FinetunePlan(mode="a", freeze_backend=True).validate()
    with pytest.raises(ValueError):
        FinetunePlan(alpha=0.0, beta=0.0).validate()
    with pytest.raises(ValueError):
        FinetunePlan(perm="best").validate()
    with pytest.raises(ValueError):
        FinetunePlan(mode="d").validate()
    with pytest.raises(ValueError):
        FinetunePlan.from_dict({"mode": "a", "speed": 2})


# -- pre-training ---------------------------------------------------------------------

def test_separator_pretraining_is_deterministic(mixtures):
    curves = []
    for _ in range(2):
        sep, _ = _models(seed=3)
        hist = pretrain_separator(sep, mixtures, SeparatorTraining(steps=3, batch_size=2, crop_samples=800))
        curves.append([r["loss"] for r in hist])
    assert curves[0] == curves[1]


def test_separator_loss_falls_monotonically_on_one_example(mixtures):
    ex = mixtures[0]
    sep = ConvTasNet(SeparatorConfig(), seed=0)
    n = len(ex.mixture)
    hist = pretrain_separator(sep, [ex], SeparatorTraining(steps=100, batch_size=1, crop_samples=n, lr=3e-4))
    losses = [r["loss"] for r in hist]
    assert all(b < a for a, b in zip(losses, losses[1:]))


@pytest.fixture(scope="module")
def utterances(small_corpus):
    return load_utterances(small_corpus[2]["train_clean"])[:6]


def test_ctc_only_recognizer_training_leaves_decoder_untouched(utterances):
    asr = AsrModel(AsrConfig(**{**ASR.to_dict(), "lam": 1.0}), seed=0)
    before = {k: p.data.copy() for k, p in asr.params.items()}
    pretrain_asr(asr, utterances, AsrTraining(epochs=1, batch_size=3))
    for k, p in asr.params.items():
        assert np.array_equal(before[k], p.data) == k.startswith("dec."), k


def test_recognizer_resume_is_bit_exact(utterances, tmp_path):
    ref = AsrModel(ASR, seed=0)
    settings_ = AsrTraining(epochs=2, batch_size=3)
    hist = pretrain_asr(ref, utterances, settings_, checkpoint_dir=tmp_path)
    resumed = AsrModel(ASR, seed=99)
    hist2 = pretrain_asr(resumed, utterances, settings_, resume_from=tmp_path / "asr-epoch1.ckpt")
    tail = [r for r in hist if r["epoch"] == 2]
    assert [r["loss"] for r in hist2] == [r["loss"] for r in tail]
    assert _same(ref.state_dict(), resumed.state_dict())


def test_separator_resume_continues_identically(mixtures, tmp_path):
    cfg = SeparatorTraining(steps=4, batch_size=1, crop_samples=600)
    a, _ = _models(seed=1)
    pretrain_separator(a, mixtures, SeparatorTraining(**{**cfg.to_dict(), "steps": 2}), checkpoint_dir=tmp_path)
    b, _ = _models(seed=1)
    full = pretrain_separator(b, mixtures, cfg)
    resumed = pretrain_separator(a, mixtures, cfg, resume_from=tmp_path / "separator.ckpt")
    assert [r["loss"] for r in resumed] == [r["loss"] for r in full[2:]]
