"""Pure-NumPy implementations of the hot kernels.

These mirror the compiled extension in lidf.kernels._ckernels; the package
picks one backend at import time (see lidf.kernels). Convolution itself is
expressed as im2col + BLAS matmul by the caller, so the kernels here are the
gather/scatter and pooling loops only.

Column layout: (B, C*K, N) for 1-D and (B, C*Kh*Kw, N) for 2-D, where N is
the number of output positions. Kernel taps vary fastest within a channel
block, matching a row-major weight reshape (C_out, C_in*K...).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "numpy"


def im2col1d(x, kernel, stride):
    """Gather sliding windows of x (B, C, L) into columns (B, C*kernel, n_out)."""
    b, c, length = x.shape
    n_out = (length - kernel) // stride + 1
    sb, sc, sl = x.strides
    view = as_strided(x, shape=(b, c, kernel, n_out), strides=(sb, sc, sl, sl * stride))
    return np.ascontiguousarray(view).reshape(b, c * kernel, n_out)


def col2im1d(cols, channels, length, kernel, stride):
    """Scatter-add columns back onto a (B, C, L) signal. Inverse of im2col1d."""
    b = cols.shape[0]
    n_out = cols.shape[2]
    cols4 = cols.reshape(b, channels, kernel, n_out)
    x = np.zeros((b, channels, length), dtype=cols.dtype)
    for k in range(kernel):
        x[:, :, k : k + (n_out - 1) * stride + 1 : stride] += cols4[:, :, k, :]
    return x


def im2col2d(x, kh, kw, sh, sw, ph, pw):
    """Gather (B, C, H, W) conv windows into columns (B, C*kh*kw, h_out*w_out)."""
    b, c, h, w = x.shape
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    hp, wp = h + 2 * ph, w + 2 * pw
    h_out = (hp - kh) // sh + 1
    w_out = (wp - kw) // sw + 1
    sb, sc, srow, scol = x.strides
    view = as_strided(
        x,
        shape=(b, c, kh, kw, h_out, w_out),
        strides=(sb, sc, srow, scol, srow * sh, scol * sw),
    )
    return np.ascontiguousarray(view).reshape(b, c * kh * kw, h_out * w_out)


def col2im2d(cols, channels, h, w, kh, kw, sh, sw, ph, pw):
    """Scatter-add columns back onto a (B, C, H, W) map. Inverse of im2col2d."""
    b = cols.shape[0]
    hp, wp = h + 2 * ph, w + 2 * pw
    h_out = (hp - kh) // sh + 1
    w_out = (wp - kw) // sw + 1
    cols6 = cols.reshape(b, channels, kh, kw, h_out, w_out)
    xp = np.zeros((b, channels, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + (h_out - 1) * sh + 1 : sh, j : j + (w_out - 1) * sw + 1 : sw] += cols6[
                :, :, i, j, :, :
            ]
    if ph or pw:
        return np.ascontiguousarray(xp[:, :, ph : ph + h, pw : pw + w])
    return xp


def maxpool1d_forward(x, window, stride):
    """Windowed max over (B, C, L). Returns (out, argmax) with absolute indices.

    Ties resolve to the lowest index (np.argmax picks the first occurrence).
    """
    b, c, length = x.shape
    n_out = (length - window) // stride + 1
    sb, sc, sl = x.strides
    view = as_strided(x, shape=(b, c, n_out, window), strides=(sb, sc, sl * stride, sl))
    arg_in_window = view.argmax(axis=3)
    out = np.take_along_axis(view, arg_in_window[..., None], axis=3)[..., 0]
    argmax = arg_in_window + np.arange(n_out, dtype=np.int64) * stride
    return np.ascontiguousarray(out), argmax.astype(np.int64)


def maxpool1d_backward(grad, argmax, length):
    """Route window gradients to their argmax positions."""
    b, c, n_out = grad.shape
    dx = np.zeros((b * c, length), dtype=grad.dtype)
    rows = np.repeat(np.arange(b * c), n_out)
    np.add.at(dx, (rows, argmax.reshape(-1)), grad.reshape(-1))
    return dx.reshape(b, c, length)


def avgpool2d_forward(x, wh, ww, sh, sw):
    """Windowed mean over (B, C, H, W)."""
    b, c, h, w = x.shape
    h_out = (h - wh) // sh + 1
    w_out = (w - ww) // sw + 1
    sb, sc, srow, scol = x.strides
    view = as_strided(
        x,
        shape=(b, c, h_out, w_out, wh, ww),
        strides=(sb, sc, srow * sh, scol * sw, srow, scol),
    )
    return view.mean(axis=(4, 5), dtype=x.dtype)


def avgpool2d_backward(grad, h, w, wh, ww, sh, sw):
    """Distribute window gradients uniformly (1/window area each)."""
    b, c, h_out, w_out = grad.shape
    dx = np.zeros((b, c, h, w), dtype=grad.dtype)
    share = grad / np.asarray(wh * ww, dtype=grad.dtype)
    for i in range(wh):
        for j in range(ww):
            dx[:, :, i : i + (h_out - 1) * sh + 1 : sh, j : j + (w_out - 1) * sw + 1 : sw] += share
    return dx
