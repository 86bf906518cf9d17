import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etvd.gradcheck import numeric_grad, rel_error
from etvd.tensor import (
    Filter,
    NonFiniteError,
    as_tensor,
    conv2d_backward,
    conv2d_forward,
    conv2d_naive,
    rotate180,
)


def random_filter(rng, c_out, c_in, k):
    return Filter(rng.standard_normal((c_out, c_in, k, k)), rng.standard_normal(c_out))


def test_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 1, 7, 5))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(conv2d_forward(x, Filter(w, np.zeros(1))), x)


def test_constant_image_ones_kernel():
    c = 0.7
    x = np.full((1, 1, 6, 6), c)
    out = conv2d_forward(x, Filter(np.ones((1, 1, 3, 3)), np.zeros(1)), zero_pad=1)
    assert out[0, 0, 3, 3] == pytest.approx(9 * c)
    assert out[0, 0, 0, 0] == pytest.approx(4 * c)
    assert out[0, 0, 0, 3] == pytest.approx(6 * c)


def test_one_by_one_is_affine():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 1, 4, 4))
    out = conv2d_forward(x, Filter(np.full((1, 1, 1, 1), 2.5), np.array([-0.3])))
    np.testing.assert_allclose(out, 2.5 * x - 0.3, atol=1e-15)


def test_channel_mismatch():
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 2, 4, 4)), Filter.zeros(1, 3, 3))


def test_non_finite_is_checked():
    x = np.zeros((1, 1, 4, 4))
    x[0, 0, 1, 1] = np.nan
    with pytest.raises(NonFiniteError):
        conv2d_forward(x, Filter.zeros(1, 1, 3))
    with pytest.raises(NonFiniteError):
        as_tensor(x, "double")


def test_filter_kernel_size_invariant():
    with pytest.raises(ValueError):
        Filter(np.zeros((1, 1, 2, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        Filter(np.zeros((2, 1, 3, 3)), np.zeros(1))


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("seed", range(5))
def test_matches_naive_loops(k, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 8, 8))
    f = random_filter(rng, 4, 3, k)
    np.testing.assert_allclose(conv2d_forward(x, f), conv2d_naive(x, f), rtol=0, atol=1e-12)


@pytest.mark.parametrize("pad", [0, 1, 2])
def test_other_paddings_match_naive(pad):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 2, 6, 7))
    f = random_filter(rng, 2, 2, 3)
    out = conv2d_forward(x, f, zero_pad=pad)
    assert out.shape == (1, 2, 6 + 2 * pad - 2, 7 + 2 * pad - 2)
    np.testing.assert_allclose(out, conv2d_naive(x, f, pad), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    k=st.sampled_from([1, 3]),
    n=st.integers(1, 2),
    c_in=st.integers(1, 3),
    c_out=st.integers(1, 3),
    h=st.integers(3, 9),
    w=st.integers(3, 9),
)
def test_same_padding_shape_and_adjoint(seed, k, n, c_in, c_out, h, w):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, c_in, h, w))
    f = Filter(rng.standard_normal((c_out, c_in, k, k)), np.zeros(c_out))
    out = conv2d_forward(u, f)
    assert out.shape == (n, c_out, h, w)
    g = rng.standard_normal(out.shape)
    gx, _ = conv2d_backward(u, f, g)
    lhs = np.sum(out * g)
    rhs = np.sum(u * gx)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_backward_zero_grad():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 5, 5))
    f = random_filter(rng, 3, 2, 3)
    gx, gf = conv2d_backward(x, f, np.zeros((1, 3, 5, 5)))
    assert not gx.any() and not gf.weights.any() and not gf.bias.any()


def test_backward_identity_kernel():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 1, 5, 6))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1
    g = rng.standard_normal(x.shape)
    gx, _ = conv2d_backward(x, Filter(w, np.zeros(1)), g)
    np.testing.assert_allclose(gx, g, atol=1e-15)


def test_single_pixel_filter_gradient():
    # one input pixel, one cotangent pixel: dL/dw is the input value at the
    # single tap that connects them, zero elsewhere
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.7
    g = np.zeros((1, 1, 5, 5))
    g[0, 0, 1, 3] = 1.0
    f = Filter(np.random.default_rng(4).standard_normal((1, 1, 3, 3)), np.zeros(1))
    _, gf = conv2d_backward(x, f, g)
    expected = np.zeros((1, 1, 3, 3))
    expected[0, 0, 2, 0] = 1.7  # output (1,3) reads input (1+2-1, 3+0-1) = (2,2)
    np.testing.assert_array_equal(gf.weights, expected)

    def obj():
        return float(np.sum(conv2d_forward(x, f) * g))

    assert rel_error(gf.weights, numeric_grad(obj, f.weights)) <= 1e-6


def test_backward_shape_mismatch():
    f = Filter.zeros(2, 1, 3)
    with pytest.raises(ValueError):
        conv2d_backward(np.zeros((1, 1, 4, 4)), f, np.zeros((1, 1, 4, 4)))


def test_rotate180_hand_case():
    np.testing.assert_array_equal(rotate180(np.array([[1, 2], [3, 4]])), [[4, 3], [2, 1]])


def test_rotate180_involution_and_fixed_point():
    rng = np.random.default_rng(5)
    f = random_filter(rng, 2, 3, 3)
    twice = rotate180(rotate180(f))
    np.testing.assert_array_equal(twice.weights, f.weights)
    np.testing.assert_array_equal(twice.bias, f.bias)
    g = random_filter(rng, 2, 3, 1)
    np.testing.assert_array_equal(rotate180(g).weights, g.weights)


def test_rotated_filter_is_true_convolution():
    # correlating with the rotated kernel equals textbook convolution
    from scipy.signal import convolve2d

    rng = np.random.default_rng(6)
    x = rng.standard_normal((1, 1, 6, 6))
    w = rng.standard_normal((3, 3))
    f = Filter(w.reshape(1, 1, 3, 3), np.zeros(1))
    out = conv2d_forward(x, rotate180(f))
    np.testing.assert_allclose(out[0, 0], convolve2d(x[0, 0], w, mode="same"), atol=1e-12)


def test_single_precision_preserved():
    x = np.ones((1, 1, 4, 4), np.float32)
    f = Filter(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
    assert conv2d_forward(x, f).dtype == np.float32
