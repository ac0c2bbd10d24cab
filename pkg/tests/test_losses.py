import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tasjoint import autograd as ag
from tasjoint.autograd import ShapeError, Tensor
from tasjoint.backend.ctc import InfeasibleAlignmentError, ctc_loss
from tasjoint.losses import (LossReport, PermutationAssignment, joint_loss, mode_weights, pi_ctc_assign,
                             pit_signal_loss, si_snr, si_snr_value)


def si_snr_oracle(est, ref, eps=1e-8, zero_mean=True):
    """Straight-line float64 transcription of the SI-SNR definition, clamp included."""
    est, ref = np.asarray(est, float), np.asarray(ref, float)
    if zero_mean:
        est, ref = est - est.mean(), ref - ref.mean()
    target = (est @ ref) / (ref @ ref) * ref
    noise = est - target
    floor = eps * (est @ est)
    db = 10 * math.log10((target @ target + floor) / (noise @ noise + floor))
    return min(60.0, max(-60.0, db))


def test_hand_case_exact_formula():
    got = si_snr_value([1, 1, 1, 0], [1, 1, 1, 1], eps=0.0, zero_mean=False)
    assert abs(got - 10 * math.log10(3)) < 1e-9


def test_hand_case_with_default_eps():
    got = si_snr_value([1, 1, 1, 0], [1, 1, 1, 1], zero_mean=False)
    assert abs(got - si_snr_oracle([1, 1, 1, 0], [1, 1, 1, 1], zero_mean=False)) < 1e-12
    assert abs(got - 4.771) < 1e-3


def test_scaled_copy_hits_ceiling(rng):
    r = rng.normal(size=100)
    assert si_snr_value(2 * r, r) == 60.0


def test_orthogonal_hits_floor():
    assert si_snr_value([0, 1], [1, 0], zero_mean=False) == -60.0


def test_errors(rng):
    with pytest.raises(ValueError):
        si_snr_value(rng.normal(size=5), np.zeros(5))
    with pytest.raises(ValueError):
        si_snr_value(rng.normal(size=5), np.full(5, 2.0))
    with pytest.raises(ShapeError):
        si_snr_value(rng.normal(size=5), rng.normal(size=6))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 1e6), st.integers(8, 200), st.booleans())
def test_scale_invariance(seed, scale, n, zero_mean):
    rng = np.random.default_rng(seed)
    ref, est = rng.normal(size=n), rng.normal(size=n)
    est = est + 2 * ref
    a, b = si_snr_value(scale * est, ref, zero_mean=zero_mean), si_snr_value(est, ref, zero_mean=zero_mean)
    assert abs(a - b) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 1e6))
def test_reference_scale_does_not_matter(seed, scale):
    rng = np.random.default_rng(seed)
    ref, est = rng.normal(size=32), rng.normal(size=32)
    assert abs(si_snr_value(est, scale * ref) - si_snr_value(est, ref)) < 1e-6


def test_quiet_signals_keep_their_value():
    ref = np.array([1.0, -1.0, 0.5, -0.5])
    est = ref + np.array([0.1, 0.1, -0.1, -0.1])
    assert abs(si_snr_value(est, ref) - si_snr_value(1e-9 * est, ref)) < 1e-9


def test_silent_estimate_is_floor():
    assert si_snr_value(np.zeros(4), [1.0, -1.0, 2.0, 0.0]) == -60.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_matches_definition(seed, zero_mean):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=50)
    est = ref * rng.uniform(-2, 2) + rng.normal(size=50) * rng.uniform(0, 3)
    assert abs(si_snr_value(est, ref, zero_mean=zero_mean) - si_snr_oracle(est, ref, zero_mean=zero_mean)) < 1e-9


def test_gradient_flows_to_estimate(rng):
    from tasjoint.autograd.gradcheck import gradcheck
    ref = rng.normal(size=20)
    assert gradcheck(lambda e: si_snr(e, ref), [ref + rng.normal(size=20)]) < 1e-6


def pit_oracle(ests, refs):
    S = len(ests)
    best = None
    for perm in itertools.permutations(range(S)):
        val = -sum(si_snr_oracle(ests[i], refs[perm[i]]) for i in range(S)) / S
        if best is None or val < best[0]:
            best = (val, perm)
    return best


def test_pit_identity_and_swap(rng):
    refs = rng.normal(size=(2, 60))
    loss, perm = pit_signal_loss(Tensor(refs.copy()), refs)
    assert loss.item() == -60.0 and perm.mapping == (0, 1)
    loss2, perm2 = pit_signal_loss(Tensor(refs[::-1].copy()), refs)
    assert loss2.item() == -60.0 and perm2.mapping == (1, 0)


@pytest.mark.parametrize("S", [1, 2, 3, 4])
def test_pit_matches_enumeration(rng, S):
    for _ in range(5):
        refs = rng.normal(size=(S, 40))
        ests = refs[rng.permutation(S)] + rng.normal(size=(S, 40)) * rng.uniform(0.2, 2.0)
        loss, perm = pit_signal_loss(Tensor(ests), refs)
        val, want = pit_oracle(ests, refs)
        assert perm.mapping == want
        assert loss.item() == pytest.approx(val, abs=1e-9)
        assert perm.value == pytest.approx(val, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(4)), st.permutations(range(4)))
def test_pit_loss_invariant_to_listing_order(seed, est_order, ref_order):
    rng = np.random.default_rng(seed)
    refs = rng.normal(size=(4, 30))
    ests = refs + rng.normal(size=(4, 30))
    base, p0 = pit_signal_loss(Tensor(ests), refs)
    moved, p1 = pit_signal_loss(Tensor(ests[list(est_order)]), refs)
    assert moved.item() == base.item()
    assert [p1.mapping[est_order.index(i)] for i in range(4)] == list(p0.mapping)
    moved_refs, p2 = pit_signal_loss(Tensor(ests), refs[list(ref_order)])
    assert moved_refs.item() == base.item()
    assert [ref_order[j] for j in p2.mapping] == list(p0.mapping)


def test_pit_tie_prefers_lexicographically_first():
    refs = np.array([[1.0, -1.0, 2.0, 0.0], [1.0, -1.0, 2.0, 0.0]])
    _, perm = pit_signal_loss(Tensor(refs.copy()), refs)
    assert perm.mapping == (0, 1)


def test_pit_mismatched_counts(rng):
    with pytest.raises(ShapeError):
        pit_signal_loss(Tensor(rng.normal(size=(2, 10))), rng.normal(size=(3, 10)))


def test_permutation_assignment_validation():
    assert PermutationAssignment((1, 0), "signal", 0.0).apply(["a", "b"]) == ["b", "a"]
    with pytest.raises(ValueError):
        PermutationAssignment((0, 0), "signal", 0.0)


def _peaked(labels_per_frame, V=4):
    lp = np.full((len(labels_per_frame), V), math.log(0.02))
    for t, k in enumerate(labels_per_frame):
        lp[t, k] = math.log(1 - 0.02 * (V - 1))
    return lp


def test_pi_ctc_single_stream_is_identity():
    assert pi_ctc_assign([_peaked([1, 0, 2])], [[1, 2]]).mapping == (0,)


def test_pi_ctc_recovers_swap():
    streams = [_peaked([1, 0, 2, 0]), _peaked([3, 3, 0, 1])]
    assert pi_ctc_assign(streams, [[3, 1], [1, 2]]).mapping == (1, 0)
    assert pi_ctc_assign(streams, [[1, 2], [3, 1]]).mapping == (0, 1)


@pytest.mark.parametrize("S", [2, 3])
def test_pi_ctc_matches_enumeration(rng, S):
    lps = [np.log(rng.dirichlet(np.ones(4), size=6)) for _ in range(S)]
    labels = [list(rng.integers(1, 4, size=rng.integers(1, 3))) for _ in range(S)]
    cost = [[ctc_loss(Tensor(lp), l).item() for l in labels] for lp in lps]
    want = min(itertools.permutations(range(S)), key=lambda p: (sum(cost[i][p[i]] for i in range(S)), p))
    got = pi_ctc_assign(lps, labels)
    assert got.mapping == want
    assert got.value == pytest.approx(sum(cost[i][want[i]] for i in range(S)), abs=1e-9)


def test_pi_ctc_skips_infeasible_pairs():
    lps = [_peaked([1, 0]), _peaked([1, 0, 2, 0, 3])]
    assert pi_ctc_assign(lps, [[1, 2, 3], [1]]).mapping == (1, 0)
    with pytest.raises(InfeasibleAlignmentError):
        pi_ctc_assign([_peaked([1]), _peaked([2])], [[1, 2], [2, 1]])


def test_joint_loss_modes():
    l_fe, l_asr = Tensor(np.array(-10.0)), Tensor(np.array(3.0))
    assert joint_loss(*mode_weights("a"), l_fe, l_asr).item() == 3.0
    assert joint_loss(*mode_weights("b"), l_fe, l_asr).item() == -10.0
    assert joint_loss(*mode_weights("c"), l_fe, l_asr).item() == -2.0
    with pytest.raises(ValueError):
        joint_loss(0.0, 0.0, l_fe, l_asr)
    with pytest.raises(ValueError):
        joint_loss(-1.0, 1.0, l_fe, l_asr)
    with pytest.raises(ValueError):
        mode_weights("z")


def test_zero_weight_term_is_not_in_graph():
    l_fe = Tensor(np.array(1.0), requires_grad=True)
    l_asr = Tensor(np.array(2.0), requires_grad=True)
    joint_loss(0.0, 1.0, l_fe, l_asr).backward()
    assert l_fe.grad is None and l_asr.grad == 1.0


@settings(max_examples=50, deadline=None)
@given(*[st.floats(-100, 100) for _ in range(3)], st.floats(0, 2), st.floats(0, 2), st.floats(0, 1))
def test_loss_report_identities(l_fe, l_ctc, l_att, alpha, beta, lam):
    report = LossReport.build(l_fe, l_ctc, l_att, alpha, beta, lam, [(0, 1)])
    assert report.check(1e-9)
    assert report.to_record()["permutations"] == [[0, 1]]
    report.total += 1.0
    assert not report.check(1e-9)
