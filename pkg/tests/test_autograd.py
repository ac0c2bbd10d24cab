import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tasjoint import autograd as ag
from tasjoint.autograd import GraphReleasedError, ShapeError, Tensor
from tasjoint.diagnostics import OP_TOLERANCE, _op_cases
from tasjoint.autograd.gradcheck import gradcheck


CASES = _op_cases(np.random.default_rng(0))


@pytest.mark.parametrize("name,fn,inputs", CASES, ids=[c[0] for c in CASES])
def test_op_gradients_match_finite_differences(name, fn, inputs):
    assert gradcheck(fn, inputs) < OP_TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_gradients_hold_across_seeds(seed):
    for name, fn, inputs in _op_cases(np.random.default_rng(seed)):
        assert gradcheck(fn, inputs, seed=seed) < OP_TOLERANCE, name


def test_log_softmax_uniform():
    out = ag.log_softmax(Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [-math.log(2), -math.log(2)], rtol=0, atol=1e-15)


def test_log_softmax_is_stable_for_large_logits():
    out = ag.log_softmax(Tensor([1000.0, 0.0]))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(np.exp(out.data).sum(), 1.0, atol=1e-12)


def test_prelu_definition():
    assert ag.prelu(Tensor([-2.0, 3.0]), Tensor([0.25])).data.tolist() == [-0.5, 3.0]


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_square_gives_twice_x():
    x = Tensor([1.5, -2.0, 0.25], requires_grad=True)
    (x * x).sum().backward()
    assert np.array_equal(x.grad, 2 * x.data)


def test_fan_out_accumulates():
    x = Tensor([3.0], requires_grad=True)
    (x + x).sum().backward()
    assert x.grad.tolist() == [2.0]


def test_gradients_accumulate_across_backward_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()
    assert x.grad.tolist() == [6.0, 6.0]


def test_non_scalar_root_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_second_backward_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * x).sum()
    y.backward()
    with pytest.raises(GraphReleasedError):
        y.backward()


def test_constant_never_gets_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([5.0, 6.0])
    (x * c).sum().backward()
    assert c.grad is None


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(4), requires_grad=True)
    with ag.no_grad():
        y = ag.tanh(x * 2.0)
    assert not y.requires_grad
    assert ag.current_graph().retained_bytes == 0


def test_retained_counter_monotone_then_zero():
    g = ag.current_graph()
    x = Tensor(np.random.default_rng(0).normal(size=(8, 16)), requires_grad=True)
    seen = [g.retained_bytes]
    h = x
    for _ in range(5):
        h = ag.tanh(h * 1.1)
        seen.append(g.retained_bytes)
    assert all(b >= a for a, b in zip(seen, seen[1:]))
    assert seen[-1] > 0
    h.sum().backward()
    assert g.retained_bytes == 0


def test_retained_counter_equals_saved_sizes():
    g = ag.current_graph()
    x = Tensor(np.ones((4, 5)), requires_grad=True)
    y = ag.exp(x)
    assert g.retained_bytes == y.data.nbytes


def test_memory_tags_split_bytes():
    g = ag.current_graph()
    x = Tensor(np.ones(10), requires_grad=True)
    with ag.memory_tag("frontend"):
        y = ag.exp(x)
    with ag.memory_tag("backend"):
        z = ag.tanh(y)
    assert g.retained_by_tag["frontend"] == 80
    assert g.retained_by_tag["backend"] == 80
    z.sum().backward()


def test_broadcast_only_over_leading_extents():
    a = Tensor(np.ones((2, 3)))
    ag.add(a, Tensor(np.ones(3)))
    with pytest.raises(ShapeError):
        ag.add(a, Tensor(np.ones((2, 1))))


def test_shape_error_names_dimension():
    with pytest.raises(ShapeError, match="channel"):
        ag.conv1d(Tensor(np.ones((3, 10))), Tensor(np.ones((2, 4, 3))))


def test_float32_precision_mode():
    with ag.precision("float32"):
        t = Tensor([1.0, 2.0])
        assert t.dtype == np.float32
    assert Tensor([1.0]).dtype == np.float64


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    p = np.exp(ag.log_softmax(Tensor(x)).data)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 4)),
              elements=st.floats(-5, 5, allow_nan=False)),
       st.integers(1, 3))
def test_broadcast_gradient_sums_over_leading_axis(b, lead):
    a = Tensor(np.ones((lead,) + b.shape), requires_grad=True)
    bt = Tensor(b, requires_grad=True)
    (a * bt).sum().backward()
    np.testing.assert_allclose(bt.grad, np.full(b.shape, float(lead)))
    np.testing.assert_allclose(a.grad, np.broadcast_to(b, a.shape))
