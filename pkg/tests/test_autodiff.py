"""Unit tests for the reverse-mode autodiff core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noclab import autodiff as ad
from noclab.errors import InvalidValue, NoTrace, SizeMismatch

RNG = np.random.default_rng(7)


def rand(shape):
    return ad.Tensor(RNG.normal(size=shape), requires_grad=True)


# ---------------------------------------------------------------------------
# construction


def test_tensor_create_shapes_and_values():
    t = ad.tensor_create((2, 3), [1, 2, 3, 4, 5, 6])
    assert t.shape == (2, 3)
    assert t.data[1, 2] == 6.0


def test_tensor_create_rejects_bad_shape():
    with pytest.raises(InvalidValue):
        ad.tensor_create((0, 3), [])
    with pytest.raises(SizeMismatch):
        ad.tensor_create((2, 2), [1, 2, 3])
    with pytest.raises(InvalidValue):
        ad.tensor_create((2,), [1, np.nan])


# ---------------------------------------------------------------------------
# forward values against independent references


def test_matmul_matches_numpy():
    a, b = rand((3, 4)), rand((4, 5))
    assert np.allclose(ad.matmul(a, b).data, a.data @ b.data)


def test_matmul_shape_error():
    with pytest.raises(SizeMismatch):
        ad.matmul(rand((2, 3)), rand((2, 3)))


def test_conv2d_matches_scipy_correlate():
    from scipy import signal

    x = rand((1, 2, 6, 6))
    k = rand((3, 2, 3, 3))
    b = ad.Tensor(np.zeros(3), requires_grad=True)
    out = ad.conv2d(x, k, b, stride=1, pad=1).data
    for co in range(3):
        ref = np.zeros((6, 6))
        for ci in range(2):
            ref += signal.correlate2d(x.data[0, ci], k.data[co, ci], mode="same")
        assert np.allclose(out[0, co], ref)


def test_conv2d_stride_and_pad_shape():
    x = rand((2, 3, 8, 8))
    k = rand((4, 3, 3, 3))
    b = ad.Tensor(np.zeros(4))
    assert ad.conv2d(x, k, b, stride=2, pad=1).shape == (2, 4, 4, 4)
    assert ad.conv2d(x, k, b, stride=1, pad=0).shape == (2, 4, 6, 6)


def test_maxpool_first_occurrence_ties():
    x = ad.Tensor(np.zeros((1, 1, 2, 2)), requires_grad=True)
    out = ad.maxpool2d(x, 2, 2)
    ad.backward(ad.tensor_sum(out))
    # all four entries tie; gradient must route to the first (flat argmax)
    assert x.grad[0, 0, 0, 0] == 1.0
    assert x.grad.sum() == 1.0


def test_softmax_cross_entropy_uniform_logits():
    logits = ad.Tensor(np.zeros((5, 4)), requires_grad=True)
    loss = ad.softmax_cross_entropy(logits, np.zeros(5, dtype=int))
    assert np.isclose(loss.item(), np.log(4.0))


def test_relu_and_elementwise_values():
    x = ad.Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    assert np.allclose(ad.relu(x).data, [0, 0, 2])
    y = ad.Tensor(np.array([2.0, 4.0, 8.0]))
    assert np.allclose(ad.div(y, ad.Tensor(np.array([1.0, 2.0, 4.0]))).data, 2.0)
    assert np.allclose(ad.sqrt(y).data, np.sqrt(y.data))
    assert np.allclose(ad.scale(y, -0.5).data, -0.5 * y.data)


# ---------------------------------------------------------------------------
# gradient checks per op


def check(f, shape, tol=1e-6):
    x = ad.Tensor(RNG.normal(size=shape))
    assert ad.grad_check(f, x) < tol


def test_grad_matmul():
    w = ad.Tensor(RNG.normal(size=(4, 3)))
    check(lambda t: ad.tensor_sum(ad.matmul(t, w)), (2, 4))


def test_grad_conv2d_input_and_kernel():
    k = ad.Tensor(RNG.normal(size=(2, 3, 3, 3)), requires_grad=True)
    b = ad.Tensor(RNG.normal(size=2), requires_grad=True)
    check(lambda t: ad.tensor_sum(ad.conv2d(t, k, b, stride=2, pad=1)), (1, 3, 5, 5))
    x = ad.Tensor(RNG.normal(size=(1, 3, 5, 5)))
    check(lambda t: ad.tensor_sum(ad.conv2d(x, t, b, stride=1, pad=0)), (2, 3, 3, 3))
    check(lambda t: ad.tensor_sum(ad.conv2d(x, k, t, stride=1, pad=1)), (2,))


def test_grad_maxpool():
    # distinct values avoid finite-difference kinks at ties
    x = ad.Tensor(RNG.permutation(36).astype(float).reshape(1, 1, 6, 6) * 0.1)
    assert ad.grad_check(lambda t: ad.tensor_sum(ad.maxpool2d(t, 2, 2)), x) < 1e-6


def test_grad_elementwise_chain():
    check(lambda t: ad.tensor_sum(ad.mul(ad.relu(t), t)), (3, 4))
    check(lambda t: ad.tensor_sum(ad.sub(ad.scale(t, 2.0), t)), (5,))


def test_grad_sqrt_div():
    x = ad.Tensor(RNG.uniform(0.5, 2.0, size=(3, 3)))
    assert ad.grad_check(lambda t: ad.tensor_sum(ad.sqrt(t)), x) < 1e-6
    d = ad.Tensor(RNG.uniform(1.0, 2.0, size=(3, 3)))
    assert ad.grad_check(lambda t: ad.tensor_sum(ad.div(t, d)), x) < 1e-6


def test_grad_bias_broadcast_add():
    x = ad.Tensor(RNG.normal(size=(4, 3)))
    b = ad.Tensor(RNG.normal(size=3), requires_grad=True)
    check(lambda t: ad.tensor_sum(ad.add(t, b)), (4, 3))
    loss = ad.tensor_sum(ad.add(ad.Tensor(x.data), b))
    ad.backward(loss)
    assert np.allclose(b.grad, 4.0)


def test_grad_softmax_cross_entropy():
    labels = np.array([0, 2, 1])
    check(lambda t: ad.softmax_cross_entropy(t, labels), (3, 4), tol=1e-6)


def test_grad_reshape():
    check(lambda t: ad.tensor_sum(ad.mul(ad.reshape(t, (6,)), ad.reshape(t, (6,)))),
          (2, 3))


# ---------------------------------------------------------------------------
# backward mechanics


def test_backward_non_scalar_rejected():
    x = rand((2, 2))
    with pytest.raises(InvalidValue):
        ad.backward(ad.relu(x))


def test_backward_detached_rejected():
    x = ad.Tensor(np.ones((2, 2)))
    with pytest.raises(NoTrace):
        ad.backward(ad.tensor_sum(x))


def test_backward_accumulates_shared_subexpression():
    x = ad.Tensor(np.array([3.0]), requires_grad=True)
    y = ad.mul(x, x)  # d/dx x^2 = 2x
    ad.backward(ad.tensor_sum(y))
    assert np.allclose(x.grad, 6.0)


def test_backward_returns_leaf_dict():
    a, b = rand((2,)), rand((2,))
    leaf = ad.backward(ad.tensor_sum(ad.add(a, b)))
    assert set(leaf) == {a, b}
    assert np.allclose(leaf[a], 1.0)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(5, 9),
       st.integers(1, 3), st.integers(0, 2), st.integers(3, 3))
def test_conv_output_shape_formula(batch, cin, hw, stride, pad, k):
    x = ad.Tensor(np.zeros((batch, cin, hw, hw)))
    kern = ad.Tensor(np.zeros((2, cin, k, k)))
    b = ad.Tensor(np.zeros(2))
    out = ad.conv2d(x, kern, b, stride=stride, pad=pad)
    expect = (hw + 2 * pad - k) // stride + 1
    assert out.shape == (batch, 2, expect, expect)
