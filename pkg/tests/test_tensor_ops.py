"""Forward semantics, error paths and finite-difference checks for every op."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jessi.tensor import (
    EmptySequenceError,
    NonFiniteError,
    Parameter,
    RngStream,
    ShapeError,
    Tensor,
    UnsupportedWidthError,
    backward,
    gradient_check,
    no_grad,
    ops,
)

TOL = 1e-4


def weights_for(shape, rng):
    return rng.normal(0.0, 1.0, shape)


def check(build, params, rng=None):
    err = gradient_check(build, params, eps=1e-5, n_coords=60, rng=rng or RngStream(7))
    assert err < TOL, err


def scalarize(t, rng):
    """Random linear functional of ``t`` so every output entry matters."""
    w = Tensor(weights_for(t.shape, rng.child("w")))
    return ops.sum(ops.mul(t, w))


# ------------------------------------------------------------------ gradient checks

@pytest.mark.parametrize("name", ["add", "sub", "mul"])
def test_binary_broadcast_gradients(name, make_param, rng):
    a, b = make_param(3, 4), make_param(1, 4)
    fn = getattr(ops, name)
    check(lambda: scalarize(fn(a, b), rng), [a, b])


@pytest.mark.parametrize("name", ["tanh", "sigmoid"])
def test_unary_gradients(name, make_param, rng):
    x = make_param(4, 5)
    check(lambda: scalarize(getattr(ops, name)(x), rng), [x])


def test_relu_gradient_away_from_kink(make_param, rng):
    x = make_param(4, 5)
    x.data[np.abs(x.data) < 1e-2] = 0.5
    check(lambda: scalarize(ops.relu(x), rng), [x])


def test_shape_op_gradients(make_param, rng):
    x = make_param(2, 3, 4)
    check(lambda: scalarize(ops.transpose(ops.reshape(x, (6, 4)), (1, 0)), rng), [x])
    check(lambda: scalarize(ops.sum(x, axis=1), rng), [x])
    check(lambda: scalarize(ops.mean(x, axis=(0, 2), keepdims=True), rng), [x])


def test_concat_index_select_gradients(make_param, rng):
    a, b = make_param(2, 3, 2), make_param(2, 3, 4)
    check(lambda: scalarize(ops.concat([a, b], axis=-1), rng), [a, b])
    check(lambda: scalarize(ops.index(a, (slice(None), [0, 2, 2])), rng), [a])
    check(lambda: scalarize(ops.select_time(b, np.array([2, 0])), rng), [b])


def test_embedding_gradient_with_repeats(make_param, rng):
    table = make_param(6, 3)
    ids = np.array([[1, 2, 2], [5, 1, 0]])
    check(lambda: scalarize(ops.embedding(table, ids), rng), [table])


def test_matmul_linear_gradients(make_param, rng):
    a, b = make_param(2, 3, 4), make_param(2, 4, 5)
    check(lambda: scalarize(ops.matmul(a, b), rng), [a, b])
    x, w, bias = make_param(2, 3, 4), make_param(5, 4), make_param(5)
    check(lambda: scalarize(ops.linear(x, w, bias), rng), [x, w, bias])


@pytest.mark.parametrize("h", [1, 3, 5, 7])
def test_conv1d_same_gradient(h, make_param, rng):
    x, k, bias = make_param(2, 6, 3), make_param(h, 3, 4, scale=0.5), make_param(4)
    check(lambda: scalarize(ops.conv1d_same(x, k, bias), rng), [x, k, bias])


def test_max_pool_and_masked_softmax_gradients(make_param, rng):
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=float)
    x = make_param(2, 4, 3)
    check(lambda: scalarize(ops.max_pool_time(x, mask), rng), [x])
    logits = make_param(2, 4)
    check(lambda: scalarize(ops.masked_softmax(logits, mask), rng), [logits])


def test_layer_norm_gradient(make_param, rng):
    x, g, b = make_param(3, 5), make_param(5), make_param(5)
    check(lambda: scalarize(ops.layer_norm(x, g, b), rng), [x, g, b])


def test_cross_entropy_gradient(make_param):
    logits = make_param(4, 2)
    gold = np.array([0, 1, 1, 0])
    check(lambda: ops.cross_entropy(ops.softmax(logits), gold), [logits])
    check(lambda: ops.cross_entropy(ops.softmax(logits), gold, reduction="sum"), [logits])


def test_dropout_gradient_fixed_mask(make_param, rng):
    x = make_param(4, 6)
    # a fresh stream with the same seed reproduces the mask on every call
    check(lambda: scalarize(ops.dropout(x, 0.5, True, RngStream(3)), rng), [x])


def test_grad_reverse_gradient_is_negated(make_param, rng):
    x = make_param(3, 4)
    loss = scalarize(ops.grad_reverse(x), rng)
    backward(loss)
    reversed_grad = x.grad.copy()
    x.zero_grad()
    backward(scalarize(x * 1.0, rng))
    np.testing.assert_array_equal(reversed_grad, -x.grad)


def test_sru_recurrence_gradient_both_directions(make_param, rng):
    B, T, d = 2, 5, 3
    u, hw = make_param(B, T, 3 * d), make_param(B, T, d)
    vf, vr, bf, br = (make_param(d) for _ in range(4))
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=float)
    for reverse in (False, True):
        check(lambda: scalarize(ops.sru_recurrence(u, hw, vf, vr, bf, br, mask, reverse), rng),
              [u, hw, vf, vr, bf, br])


# ------------------------------------------------------------------ forward semantics

def test_conv1d_same_preserves_length_and_matches_loop(rng):
    x = rng.normal(shape=(2, 7, 3))
    for h in (3, 5, 7):
        k = rng.normal(shape=(h, 3, 4))
        b = rng.normal(shape=4)
        out = ops.conv1d_same(Tensor(x), Tensor(k), Tensor(b)).data
        assert out.shape == (2, 7, 4)
        pad = (h - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        ref = np.stack([np.einsum("bhd,hdo->bo", xp[:, t:t + h], k) for t in range(7)], axis=1) + b
        np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv1d_even_width_rejected(rng):
    with pytest.raises(UnsupportedWidthError):
        ops.conv1d_same(Tensor(np.zeros((1, 4, 2))), Tensor(np.zeros((4, 2, 3))), Tensor(np.zeros(3)))


def test_masked_softmax_zero_on_padding_and_sums_to_one():
    logits = Tensor(np.array([[1.0, 2.0, 3.0, 50.0]]))
    mask = np.array([[1, 1, 1, 0]])
    p = ops.masked_softmax(logits, mask).data
    assert p[0, 3] == 0.0
    assert abs(p.sum() - 1.0) < 1e-12


def test_masked_softmax_fully_masked_row_raises():
    with pytest.raises(EmptySequenceError):
        ops.masked_softmax(Tensor(np.ones((2, 3))), np.array([[1, 1, 0], [0, 0, 0]]))


def test_softmax_large_logits_stay_finite():
    p = ops.softmax(Tensor(np.array([[1000.0, 0.0], [-1000.0, 1000.0]]))).data
    assert np.isfinite(p).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


def test_cross_entropy_values_and_validation():
    p = Tensor(np.array([[0.5, 0.5], [1.0, 0.0]]))
    assert ops.cross_entropy(p, [0, 0], reduction="sum").data == pytest.approx(np.log(2))
    # clamped rather than infinite when the gold class has probability zero
    assert np.isfinite(ops.cross_entropy(p, [1, 1]).data)
    with pytest.raises(IndexError):
        ops.cross_entropy(p, [0, 2])
    with pytest.raises(ValueError):
        ops.cross_entropy(Tensor(np.array([[0.7, 0.7]])), [0])


def test_dropout_eval_identity_and_inverted_scaling(rng):
    x = Tensor(np.ones((200, 50)))
    np.testing.assert_array_equal(ops.dropout(x, 0.5, False, rng).data, x.data)
    y = ops.dropout(x, 0.5, True, rng).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_layer_norm_normalizes():
    x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
    y = ops.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))).data
    assert abs(y.mean()) < 1e-12
    assert abs(y.var() - 1.0) < 1e-4


def test_max_pool_ignores_padding():
    x = np.array([[[1.0], [2.0], [100.0]]])
    out = ops.max_pool_time(Tensor(x), np.array([[1, 1, 0]])).data
    assert out[0, 0] == 2.0


# ------------------------------------------------------------------ engine

def test_backward_requires_scalar(make_param):
    x = make_param(3)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_no_grad_builds_no_graph(make_param):
    x = make_param(3)
    with no_grad():
        y = ops.tanh(x)
    assert not y.requires_grad


def test_non_finite_forward_raises():
    with pytest.raises(NonFiniteError):
        ops.mul(Tensor(np.array([np.inf])), Tensor(np.array([1.0])))


def test_gradients_accumulate_across_backward_calls(make_param):
    x = make_param(2)
    backward(ops.sum(x * 3.0))
    backward(ops.sum(x * 3.0))
    np.testing.assert_allclose(x.grad, 6.0)


def test_shared_subgraph_gradient(make_param, rng):
    x = make_param(3, 3)
    check(lambda: scalarize(ops.mul(ops.tanh(x), ops.tanh(x)), rng), [x])


def test_gradient_check_rejects_float32():
    p = Parameter(np.zeros(3, dtype=np.float32))
    with pytest.raises(ValueError):
        gradient_check(lambda: ops.sum(p), [p])


# ------------------------------------------------------------------ properties

finite = st.floats(-20, 20, allow_nan=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_is_a_distribution(x):
    p = ops.softmax(Tensor(x)).data
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=finite), st.lists(st.integers(1, 5), min_size=3, max_size=3))
def test_masked_softmax_support_is_the_mask(x, lengths):
    mask = (np.arange(5)[None, :] < np.array(lengths)[:, None]).astype(float)
    p = ops.masked_softmax(Tensor(x), mask).data
    assert (p[mask == 0] == 0).all()
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 6, 3), elements=finite), st.sampled_from([1, 3, 5, 7]))
def test_conv1d_same_length_property(x, h):
    k = np.ones((h, 3, 2))
    assert ops.conv1d_same(Tensor(x), Tensor(k), Tensor(np.zeros(2))).shape == (2, 6, 2)
