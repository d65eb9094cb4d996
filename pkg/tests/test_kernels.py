"""Parity between the compiled kernels and the NumPy fallback."""

import numpy as np
import pytest

from lidf.kernels import numpy_backend

cy = pytest.importorskip("lidf.kernels._ckernels")


def cases_1d(rng, n=12):
    for _ in range(n):
        b = int(rng.integers(1, 4))
        c = int(rng.integers(1, 6))
        k = int(rng.integers(1, 8))
        stride = int(rng.integers(1, 4))
        length = int(rng.integers(k, k + 40))
        yield b, c, length, k, stride


def cases_2d(rng, n=10):
    for _ in range(n):
        b = int(rng.integers(1, 3))
        c = int(rng.integers(1, 5))
        kh, kw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        sh, sw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        ph, pw = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        h = int(rng.integers(max(1, kh - 2 * ph), kh + 10))
        w = int(rng.integers(max(1, kw - 2 * pw), kw + 10))
        if h + 2 * ph < kh or w + 2 * pw < kw:
            continue
        yield b, c, h, w, kh, kw, sh, sw, ph, pw


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col1d_col2im1d_parity(dtype, rng):
    for b, c, length, k, stride in cases_1d(rng):
        x = rng.normal(size=(b, c, length)).astype(dtype)
        ours = cy.im2col1d(x, k, stride)
        ref = numpy_backend.im2col1d(x, k, stride)
        assert np.array_equal(ours, ref)
        cols = rng.normal(size=ref.shape).astype(dtype)
        assert np.allclose(
            cy.col2im1d(cols, c, length, k, stride),
            numpy_backend.col2im1d(cols, c, length, k, stride),
            rtol=1e-6, atol=1e-6,
        )


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col2d_col2im2d_parity(dtype, rng):
    for b, c, h, w, kh, kw, sh, sw, ph, pw in cases_2d(rng):
        x = rng.normal(size=(b, c, h, w)).astype(dtype)
        ours = cy.im2col2d(x, kh, kw, sh, sw, ph, pw)
        ref = numpy_backend.im2col2d(x, kh, kw, sh, sw, ph, pw)
        assert np.array_equal(ours, ref)
        cols = rng.normal(size=ref.shape).astype(dtype)
        assert np.allclose(
            cy.col2im2d(cols, c, h, w, kh, kw, sh, sw, ph, pw),
            numpy_backend.col2im2d(cols, c, h, w, kh, kw, sh, sw, ph, pw),
            rtol=1e-6, atol=1e-6,
        )


def test_maxpool1d_parity_and_ties(rng):
    for b, c, length, k, stride in cases_1d(rng):
        x = rng.normal(size=(b, c, length)).astype(np.float32)
        out_cy, arg_cy = cy.maxpool1d_forward(x, k, stride)
        out_np, arg_np = numpy_backend.maxpool1d_forward(x, k, stride)
        assert np.array_equal(out_cy, out_np)
        assert np.array_equal(arg_cy, arg_np)
        grad = rng.normal(size=out_np.shape).astype(np.float32)
        assert np.allclose(
            cy.maxpool1d_backward(grad, arg_np, length),
            numpy_backend.maxpool1d_backward(grad, arg_np, length),
        )
    # exact ties must pick the lowest index in both backends
    x = np.ones((1, 1, 6), dtype=np.float32)
    _, arg_cy = cy.maxpool1d_forward(x, 3, 3)
    _, arg_np = numpy_backend.maxpool1d_forward(x, 3, 3)
    assert arg_cy.tolist() == arg_np.tolist() == [[[0, 3]]]


def test_avgpool2d_parity(rng):
    for _ in range(8):
        b, c = int(rng.integers(1, 3)), int(rng.integers(1, 5))
        wh, ww = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        sh, sw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        h = int(rng.integers(wh, wh + 8))
        w = int(rng.integers(ww, ww + 8))
        x = rng.normal(size=(b, c, h, w)).astype(np.float32)
        assert np.allclose(
            cy.avgpool2d_forward(x, wh, ww, sh, sw),
            numpy_backend.avgpool2d_forward(x, wh, ww, sh, sw),
            rtol=1e-6, atol=1e-6,
        )
        h_out = (h - wh) // sh + 1
        w_out = (w - ww) // sw + 1
        grad = rng.normal(size=(b, c, h_out, w_out)).astype(np.float32)
        assert np.allclose(
            cy.avgpool2d_backward(grad, h, w, wh, ww, sh, sw),
            numpy_backend.avgpool2d_backward(grad, h, w, wh, ww, sh, sw),
            rtol=1e-6, atol=1e-6,
        )
