"""Both kernel backends must agree; a few hand oracles pin the semantics."""

import numpy as np
import pytest
import scipy.signal

from featmimic.kernels import numba_impl, numpy_impl

IMPLS = [numpy_impl, numba_impl]
IDS = ["numpy", "numba"]


def _rand(shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return (scale * rng.normal(0.0, 1.0, shape)).astype(np.float32)


def test_dense_backends_agree():
    w = _rand((8, 16), 0)
    b = _rand((8,), 1)
    x = _rand((16,), 2, scale=10.0)
    dy = _rand((8,), 3)
    assert np.allclose(numpy_impl.dense_forward(w, b, x), numba_impl.dense_forward(w, b, x), rtol=1e-5, atol=1e-5)
    assert np.allclose(numpy_impl.dense_input_grad(w, dy), numba_impl.dense_input_grad(w, dy), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("impl", IMPLS, ids=IDS)
def test_conv_forward_hand_case(impl):
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
    k = np.ones((1, 1, 2, 2), dtype=np.float32)
    b = np.zeros(1, dtype=np.float32)
    y = impl.conv2d_forward(x, k, b, 1, 1, 0, 0)
    assert y.shape == (1, 1, 1)
    assert y[0, 0, 0] == 10.0


def test_conv_backends_agree_on_strided_padded_case():
    x = _rand((4, 9, 11), 4, scale=3.0)
    k = _rand((5, 4, 3, 3), 5)
    b = _rand((5,), 6)
    a = numpy_impl.conv2d_forward(x, k, b, 2, 2, 1, 2)
    c = numba_impl.conv2d_forward(x, k, b, 2, 2, 1, 2)
    assert a.shape == c.shape
    assert np.allclose(a, c, rtol=1e-5, atol=1e-4)
    dy = _rand(a.shape, 7)
    ga = numpy_impl.conv2d_input_grad(dy, k, 4, 9, 11, 2, 2, 1, 2)
    gc = numba_impl.conv2d_input_grad(dy, k, 4, 9, 11, 2, 2, 1, 2)
    assert np.allclose(ga, gc, rtol=1e-5, atol=1e-4)


@pytest.mark.parametrize("impl", IMPLS, ids=IDS)
def test_conv_input_grad_is_the_adjoint_of_the_forward(impl):
    x = _rand((2, 8, 8), 8)
    k = _rand((3, 2, 3, 3), 9)
    b = np.zeros(3, dtype=np.float32)
    y = impl.conv2d_forward(x, k, b, 1, 1, 1, 1)
    dy = _rand(y.shape, 10)
    gx = impl.conv2d_input_grad(dy, k, 2, 8, 8, 1, 1, 1, 1)
    lhs = float(np.dot(y.reshape(-1).astype(np.float64), dy.reshape(-1).astype(np.float64)))
    rhs = float(np.dot(x.reshape(-1).astype(np.float64), gx.reshape(-1).astype(np.float64)))
    assert lhs == pytest.approx(rhs, rel=1e-4)


@pytest.mark.parametrize("impl", IMPLS, ids=IDS)
def test_maxpool_tie_picks_first_window_position(impl):
    flat = np.array([[[5.0, 5.0], [5.0, 5.0]]], dtype=np.float32)
    y, idx = impl.maxpool2d_forward(flat, 2, 2, 2, 2)
    assert y[0, 0, 0] == 5.0
    assert idx[0, 0, 0] == 0
    x = np.array([[[1.0, 7.0], [7.0, 0.0]]], dtype=np.float32)
    _, idx = impl.maxpool2d_forward(x, 2, 2, 2, 2)
    assert idx[0, 0, 0] == 1


def test_maxpool_backends_agree_exactly():
    x = _rand((6, 12, 10), 11, scale=50.0)
    ya, ia = numpy_impl.maxpool2d_forward(x, 2, 2, 2, 2)
    yb, ib = numba_impl.maxpool2d_forward(x, 2, 2, 2, 2)
    assert np.array_equal(ya, yb)
    assert np.array_equal(ia, ib)
    dy = _rand(ya.shape, 12)
    ga = numpy_impl.maxpool2d_input_grad(dy, ia, 6, 12, 10)
    gb = numba_impl.maxpool2d_input_grad(dy, ib, 6, 12, 10)
    assert np.array_equal(ga, gb)


def test_maxpool_grad_accumulates_overlapping_windows():
    x = np.arange(9.0, dtype=np.float32).reshape(1, 3, 3)
    y, idx = numpy_impl.maxpool2d_forward(x, 2, 2, 1, 1)
    assert np.array_equal(idx[0], [[4, 5], [7, 8]])
    dy = np.ones_like(y)
    for impl in IMPLS:
        g = impl.maxpool2d_input_grad(dy, idx, 1, 3, 3)
        assert np.array_equal(g[0], [[0, 0, 0], [0, 1, 1], [0, 1, 1]])


def test_warp_identity_is_exact_and_backends_agree():
    rng = np.random.default_rng(13)
    img = rng.uniform(0.0, 255.0, (20, 24))
    eye = np.eye(3)
    for impl in IMPLS:
        assert np.array_equal(impl.warp_bilinear(img, eye, 20, 24), img)
    m = np.array([[1.01, 0.02, -1.3], [-0.015, 0.99, 2.1], [0.0, 0.0, 1.0]])
    a = numpy_impl.warp_bilinear(img, m, 20, 24)
    b = numba_impl.warp_bilinear(img, m, 20, 24)
    assert np.allclose(a, b, atol=1e-10)


def test_warp_replicates_the_border():
    rng = np.random.default_rng(14)
    img = rng.uniform(0.0, 255.0, (8, 8))
    shift = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    for impl in IMPLS:
        out = impl.warp_bilinear(img, shift, 8, 8)
        assert np.allclose(out[:, :-1], img[:, 1:])
        assert np.allclose(out[:, -1], img[:, -1])


def test_sepfilter_matches_full_2d_convolution():
    rng = np.random.default_rng(15)
    img = rng.uniform(0.0, 255.0, (16, 18))
    k1 = np.exp(-0.5 * (np.arange(5.0) - 2.0) ** 2)
    k1 /= k1.sum()
    expected = scipy.signal.convolve2d(img, np.flip(np.outer(k1, k1)), mode="valid")
    for impl in IMPLS:
        assert np.allclose(impl.sepfilter2d_valid(img, k1), expected, atol=1e-9)
    a = numpy_impl.sepfilter2d_valid(img, k1)
    b = numba_impl.sepfilter2d_valid(img, k1)
    assert np.allclose(a, b, atol=1e-12)
