# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter and pooling kernels.

Same contracts as lidf.kernels.numpy_backend; see there for the column
layout. Single-threaded by design so results are bitwise reproducible.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double

NAME = "cython"


def im2col1d(floating[:, :, ::1] x, Py_ssize_t kernel, Py_ssize_t stride):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t n_out = (length - kernel) // stride + 1
    out_arr = np.empty((b, c * kernel, n_out), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t ib, ic, k, t, row
    for ib in range(b):
        for ic in range(c):
            for k in range(kernel):
                row = ic * kernel + k
                if stride == 1:  # contiguous run -> block copy
                    out[ib, row, :] = x[ib, ic, k : k + n_out]
                else:
                    for t in range(n_out):
                        out[ib, row, t] = x[ib, ic, t * stride + k]
    return out_arr


def col2im1d(floating[:, :, ::1] cols, Py_ssize_t channels, Py_ssize_t length,
             Py_ssize_t kernel, Py_ssize_t stride):
    cdef Py_ssize_t b = cols.shape[0], n_out = cols.shape[2]
    x_arr = np.zeros((b, channels, length), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] x = x_arr
    cdef Py_ssize_t ib, ic, k, t, row
    for ib in range(b):
        for ic in range(channels):
            for k in range(kernel):
                row = ic * kernel + k
                for t in range(n_out):
                    x[ib, ic, t * stride + k] += cols[ib, row, t]
    return x_arr


def im2col2d(floating[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sh, Py_ssize_t sw, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h_out = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t w_out = (w + 2 * pw - kw) // sw + 1
    # zeros, not empty: out-of-image taps stay at zero padding
    out_arr = np.zeros((b, c * kh * kw, h_out * w_out),
                       dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t ib, ic, i, j, oy, ox, iy, row, oy_lo, oy_hi, ox_lo, ox_hi, base
    for ib in range(b):
        for ic in range(c):
            for i in range(kh):
                oy_lo = 0 if i >= ph else (ph - i + sh - 1) // sh
                oy_hi = (h - 1 - i + ph) // sh + 1
                if oy_hi > h_out:
                    oy_hi = h_out
                for j in range(kw):
                    row = (ic * kh + i) * kw + j
                    ox_lo = 0 if j >= pw else (pw - j + sw - 1) // sw
                    ox_hi = (w - 1 - j + pw) // sw + 1
                    if ox_hi > w_out:
                        ox_hi = w_out
                    for oy in range(oy_lo, oy_hi):
                        iy = oy * sh + i - ph
                        base = oy * w_out
                        if sw == 1:  # contiguous run -> block copy
                            out[ib, row, base + ox_lo : base + ox_hi] = \
                                x[ib, ic, iy, ox_lo + j - pw : ox_hi + j - pw]
                        else:
                            for ox in range(ox_lo, ox_hi):
                                out[ib, row, base + ox] = x[ib, ic, iy, ox * sw + j - pw]
    return out_arr


def col2im2d(floating[:, :, ::1] cols, Py_ssize_t channels, Py_ssize_t h, Py_ssize_t w,
             Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t b = cols.shape[0]
    cdef Py_ssize_t h_out = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t w_out = (w + 2 * pw - kw) // sw + 1
    x_arr = np.zeros((b, channels, h, w), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] x = x_arr
    cdef Py_ssize_t ib, ic, i, j, oy, ox, iy, row, oy_lo, oy_hi, ox_lo, ox_hi, base
    for ib in range(b):
        for ic in range(channels):
            for i in range(kh):
                oy_lo = 0 if i >= ph else (ph - i + sh - 1) // sh
                oy_hi = (h - 1 - i + ph) // sh + 1
                if oy_hi > h_out:
                    oy_hi = h_out
                for j in range(kw):
                    row = (ic * kh + i) * kw + j
                    ox_lo = 0 if j >= pw else (pw - j + sw - 1) // sw
                    ox_hi = (w - 1 - j + pw) // sw + 1
                    if ox_hi > w_out:
                        ox_hi = w_out
                    for oy in range(oy_lo, oy_hi):
                        iy = oy * sh + i - ph
                        base = oy * w_out
                        for ox in range(ox_lo, ox_hi):
                            x[ib, ic, iy, ox * sw + j - pw] += cols[ib, row, base + ox]
    return x_arr


def maxpool1d_forward(floating[:, :, ::1] x, Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t n_out = (length - window) // stride + 1
    out_arr = np.empty((b, c, n_out), dtype=np.float32 if floating is float else np.float64)
    arg_arr = np.empty((b, c, n_out), dtype=np.int64)
    cdef floating[:, :, ::1] out = out_arr
    cdef long long[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t ib, ic, t, k, start, best_k
    cdef floating best, v
    for ib in range(b):
        for ic in range(c):
            for t in range(n_out):
                start = t * stride
                best = x[ib, ic, start]
                best_k = start
                for k in range(1, window):
                    v = x[ib, ic, start + k]
                    if v > best:  # strict: ties keep the lowest index
                        best = v
                        best_k = start + k
                out[ib, ic, t] = best
                arg[ib, ic, t] = best_k
    return out_arr, arg_arr


def maxpool1d_backward(floating[:, :, ::1] grad, long long[:, :, ::1] argmax, Py_ssize_t length):
    cdef Py_ssize_t b = grad.shape[0], c = grad.shape[1], n_out = grad.shape[2]
    dx_arr = np.zeros((b, c, length), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t ib, ic, t
    for ib in range(b):
        for ic in range(c):
            for t in range(n_out):
                dx[ib, ic, argmax[ib, ic, t]] += grad[ib, ic, t]
    return dx_arr


def avgpool2d_forward(floating[:, :, :, ::1] x, Py_ssize_t wh, Py_ssize_t ww,
                      Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h_out = (h - wh) // sh + 1
    cdef Py_ssize_t w_out = (w - ww) // sw + 1
    out_arr = np.empty((b, c, h_out, w_out), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ib, ic, oy, ox, i, j
    cdef floating acc, inv_area
    inv_area = <floating> (1.0 / (wh * ww))
    for ib in range(b):
        for ic in range(c):
            for oy in range(h_out):
                for ox in range(w_out):
                    acc = 0
                    for i in range(wh):
                        for j in range(ww):
                            acc = acc + x[ib, ic, oy * sh + i, ox * sw + j]
                    out[ib, ic, oy, ox] = acc * inv_area
    return out_arr


def avgpool2d_backward(floating[:, :, :, ::1] grad, Py_ssize_t h, Py_ssize_t w,
                       Py_ssize_t wh, Py_ssize_t ww, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t b = grad.shape[0], c = grad.shape[1]
    cdef Py_ssize_t h_out = grad.shape[2], w_out = grad.shape[3]
    dx_arr = np.zeros((b, c, h, w), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t ib, ic, oy, ox, i, j
    cdef floating share, inv_area
    inv_area = <floating> (1.0 / (wh * ww))
    for ib in range(b):
        for ic in range(c):
            for oy in range(h_out):
                for ox in range(w_out):
                    share = grad[ib, ic, oy, ox] * inv_area
                    for i in range(wh):
                        for j in range(ww):
                            dx[ib, ic, oy * sh + i, ox * sw + j] += share
    return dx_arr
