"""Differentiable neural-network operations.

Convolution and pooling delegate their gather/scatter to the selected kernel
backend (compiled or NumPy) and keep the matrix products in BLAS. Inputs may
be single samples (the shapes quoted in the op contracts) or carry a leading
batch axis; outputs match.
"""

from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np

from .. import kernels
from ..errors import InvalidArgumentError, InvalidStateError
from .tensor import Tensor, _check_same_dtype

Pair = Tuple[int, int]

# forward-pass columns below this size are kept for the backward pass;
# larger ones are re-gathered to bound graph memory
_COLS_CACHE_BYTES = 96 * 1024 * 1024


def _as_pair(value: Union[int, Pair]) -> Pair:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def conv1d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid (unpadded) cross-correlation of (C_in, L) or (B, C_in, L) with
    bias-free filters (C_out, C_in, K)."""
    _check_same_dtype(x, w, "conv1d")
    if stride < 1:
        raise InvalidArgumentError(f"conv1d: stride must be >= 1, got {stride}")
    if w.ndim != 3:
        raise InvalidArgumentError(f"conv1d: weight must be (C_out, C_in, K), got {w.shape}")
    batched = x.ndim == 3
    if not batched and x.ndim != 2:
        raise InvalidArgumentError(f"conv1d: input must be (C, L) or (B, C, L), got {x.shape}")
    c_out, c_in, k = w.shape
    xb = x.data if batched else x.data[None]
    if xb.shape[1] != c_in:
        raise InvalidArgumentError(f"conv1d: input has {xb.shape[1]} channels, weight expects {c_in}")
    length = xb.shape[2]
    if length < k:
        raise InvalidArgumentError(f"conv1d: input length {length} shorter than kernel {k}")

    cols = kernels.im2col1d(xb, k, stride)
    w_mat = w.data.reshape(c_out, c_in * k)
    out_data = np.matmul(w_mat, cols)
    out = Tensor(out_data if batched else out_data[0])
    saved_cols = cols if cols.nbytes <= _COLS_CACHE_BYTES else None
    del cols

    def backward(grad):
        gb = grad if batched else grad[None]
        if w.requires_grad:
            cols_b = saved_cols if saved_cols is not None else kernels.im2col1d(xb, k, stride)
            dw = np.matmul(gb, cols_b.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.shape))
        if x.requires_grad:
            dcols = np.matmul(w_mat.T, gb)
            dx = kernels.col2im1d(np.ascontiguousarray(dcols), c_in, length, k, stride)
            x._accumulate(dx if batched else dx[0])

    return out._record((x, w), backward, "conv1d")


def conv2d(x: Tensor, w: Tensor, stride: Union[int, Pair] = 1, padding: Union[int, Pair] = 0) -> Tensor:
    """Zero-padded cross-correlation of (C_in, H, W) or (B, C_in, H, W) with
    bias-free filters (C_out, C_in, Kh, Kw)."""
    _check_same_dtype(x, w, "conv2d")
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    if sh < 1 or sw < 1:
        raise InvalidArgumentError(f"conv2d: stride must be >= 1, got {(sh, sw)}")
    if ph < 0 or pw < 0:
        raise InvalidArgumentError(f"conv2d: padding must be >= 0, got {(ph, pw)}")
    if w.ndim != 4:
        raise InvalidArgumentError(f"conv2d: weight must be (C_out, C_in, Kh, Kw), got {w.shape}")
    batched = x.ndim == 4
    if not batched and x.ndim != 3:
        raise InvalidArgumentError(f"conv2d: input must be (C, H, W) or (B, C, H, W), got {x.shape}")
    c_out, c_in, kh, kw = w.shape
    xb = x.data if batched else x.data[None]
    if xb.shape[1] != c_in:
        raise InvalidArgumentError(f"conv2d: input has {xb.shape[1]} channels, weight expects {c_in}")
    h, wd = xb.shape[2], xb.shape[3]
    if h + 2 * ph < kh or wd + 2 * pw < kw:
        raise InvalidArgumentError(
            f"conv2d: padded input {(h + 2 * ph, wd + 2 * pw)} smaller than kernel {(kh, kw)}"
        )
    h_out = (h + 2 * ph - kh) // sh + 1
    w_out = (wd + 2 * pw - kw) // sw + 1

    cols = kernels.im2col2d(xb, kh, kw, sh, sw, ph, pw)
    w_mat = w.data.reshape(c_out, c_in * kh * kw)
    out_data = np.matmul(w_mat, cols).reshape(xb.shape[0], c_out, h_out, w_out)
    out = Tensor(out_data if batched else out_data[0])
    saved_cols = cols if cols.nbytes <= _COLS_CACHE_BYTES else None
    del cols

    def backward(grad):
        gb = grad if batched else grad[None]
        gb = gb.reshape(xb.shape[0], c_out, h_out * w_out)
        if w.requires_grad:
            cols_b = saved_cols if saved_cols is not None else kernels.im2col2d(xb, kh, kw, sh, sw, ph, pw)
            dw = np.matmul(gb, cols_b.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.shape))
        if x.requires_grad:
            dcols = np.matmul(w_mat.T, gb)
            dx = kernels.col2im2d(np.ascontiguousarray(dcols), c_in, h, wd, kh, kw, sh, sw, ph, pw)
            x._accumulate(dx if batched else dx[0])

    return out._record((x, w), backward, "conv2d")


def maxpool1d(x: Tensor, window: int, stride: int) -> Tensor:
    """Windowed max over time; gradient goes to the argmax (ties: lowest index)."""
    if window < 1 or stride < 1:
        raise InvalidArgumentError(f"maxpool1d: window/stride must be >= 1, got {window}/{stride}")
    batched = x.ndim == 3
    if not batched and x.ndim != 2:
        raise InvalidArgumentError(f"maxpool1d: input must be (C, L) or (B, C, L), got {x.shape}")
    xb = x.data if batched else x.data[None]
    length = xb.shape[2]
    if length < window:
        raise InvalidArgumentError(f"maxpool1d: input length {length} shorter than window {window}")

    out_data, argmax = kernels.maxpool1d_forward(xb, window, stride)
    out = Tensor(out_data if batched else out_data[0])

    def backward(grad):
        if not x.requires_grad:
            return
        gb = np.ascontiguousarray(grad if batched else grad[None])
        dx = kernels.maxpool1d_backward(gb, argmax, length)
        x._accumulate(dx if batched else dx[0])

    return out._record((x,), backward, "maxpool1d")


def avgpool2d(x: Tensor, window: Union[int, Pair], stride: Union[int, Pair]) -> Tensor:
    """Windowed mean over space; gradient spreads uniformly across each window."""
    wh, ww = _as_pair(window)
    sh, sw = _as_pair(stride)
    if min(wh, ww, sh, sw) < 1:
        raise InvalidArgumentError("avgpool2d: window and stride must be >= 1")
    batched = x.ndim == 4
    if not batched and x.ndim != 3:
        raise InvalidArgumentError(f"avgpool2d: input must be (C, H, W) or (B, C, H, W), got {x.shape}")
    xb = x.data if batched else x.data[None]
    h, wd = xb.shape[2], xb.shape[3]
    if h < wh or wd < ww:
        raise InvalidArgumentError(f"avgpool2d: window {(wh, ww)} larger than input {(h, wd)}")

    out_data = kernels.avgpool2d_forward(xb, wh, ww, sh, sw)
    out = Tensor(out_data if batched else out_data[0])

    def backward(grad):
        if not x.requires_grad:
            return
        gb = np.ascontiguousarray(grad if batched else grad[None])
        dx = kernels.avgpool2d_backward(gb, h, wd, wh, ww, sh, sw)
        x._accumulate(dx if batched else dx[0])

    return out._record((x,), backward, "avgpool2d")


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * (x.data > 0))

    return out._record((x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    # evaluated piecewise to stay overflow-free for large |x|
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out_data[~pos] = ez / (1.0 + ez)
    out = Tensor(out_data)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * out_data * (1.0 - out_data))

    return out._record((x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    out = Tensor(out_data)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * (1.0 - out_data * out_data))

    return out._record((x,), backward, "tanh")


def linear(x: Tensor, w: Tensor) -> Tensor:
    """Bias-free matrix product over the trailing feature axis."""
    _check_same_dtype(x, w, "linear")
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise InvalidArgumentError(
            f"linear: input features {x.shape[-1:]} do not match weight {w.shape}"
        )
    out = Tensor(x.data @ w.data)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.reshape(-1, w.shape[0]).T @ grad.reshape(-1, w.shape[1]))

    return out._record((x, w), backward, "linear")


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise InvalidStateError("dropout: training mode requires an RNG")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype.type)
    mask = keep / x.dtype.type(1.0 - rate)
    out = Tensor(x.data * mask)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * mask)

    return out._record((x,), backward, "dropout")


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    channel_axis: int,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over every axis except `channel_axis`, then apply the affine
    pair. Train mode uses batch statistics and updates the running buffers in
    place; eval mode uses the running buffers (mean 0 / var 1 until the first
    train step)."""
    c = x.shape[channel_axis]
    if gamma.size != c or beta.size != c:
        raise InvalidArgumentError(
            f"batchnorm: channel axis has {c} channels, affine parameters have "
            f"{gamma.size}/{beta.size}"
        )
    _check_same_dtype(x, gamma, "batchnorm")
    axes = tuple(i for i in range(x.ndim) if i != channel_axis)
    pshape = tuple(c if i == channel_axis else 1 for i in range(x.ndim))
    n = int(np.prod([x.shape[i] for i in axes])) if axes else 1
    ftype = x.dtype.type

    if training:
        mu = x.data.mean(axis=axes, keepdims=True, dtype=x.dtype)
        var = x.data.var(axis=axes, keepdims=True, dtype=x.dtype)
        unbiased = var * ftype(n / (n - 1)) if n > 1 else var
        running_mean *= ftype(1.0 - momentum)
        running_mean += ftype(momentum) * mu.reshape(c).astype(running_mean.dtype)
        running_var *= ftype(1.0 - momentum)
        running_var += ftype(momentum) * unbiased.reshape(c).astype(running_var.dtype)
    else:
        mu = running_mean.astype(x.dtype).reshape(pshape)
        var = running_var.astype(x.dtype).reshape(pshape)

    invstd = ftype(1.0) / np.sqrt(var + ftype(eps))
    xhat = (x.data - mu) * invstd
    g = gamma.data.reshape(pshape)
    out = Tensor(xhat * g + beta.data.reshape(pshape))

    def backward(grad):
        if gamma.requires_grad:
            gamma._accumulate((grad * xhat).sum(axis=axes).reshape(gamma.shape))
        if beta.requires_grad:
            beta._accumulate(grad.sum(axis=axes).reshape(beta.shape))
        if not x.requires_grad:
            return
        if training:
            grad_mean = grad.mean(axis=axes, keepdims=True, dtype=x.dtype)
            gx_mean = (grad * xhat).mean(axis=axes, keepdims=True, dtype=x.dtype)
            x._accumulate(g * invstd * (grad - grad_mean - xhat * gx_mean))
        else:
            x._accumulate(grad * g * invstd)

    return out._record((x, gamma, beta), backward, "batchnorm")


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross entropy between softmax(logits) and probability-row targets.

    Targets may be one-hot or soft rows (mixup); each row must sum to 1.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=logits.dtype)
    if logits.ndim != 2 or t.shape != logits.shape:
        raise InvalidArgumentError(
            f"softmax_cross_entropy: expected matching (B, C) shapes, got {logits.shape} and {t.shape}"
        )
    row_sums = t.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6) or np.any(t < 0):
        raise InvalidArgumentError("softmax_cross_entropy: each target row must be a distribution")
    b = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(denom)
    probs = ez / denom
    loss = -(t * log_probs).sum(dtype=logits.dtype) / logits.dtype.type(b)
    out = Tensor(np.asarray(loss, dtype=logits.dtype))

    def backward(grad):
        if logits.requires_grad:
            logits._accumulate((probs - t) * (grad / logits.dtype.type(b)))

    return out._record((logits,), backward, "softmax_cross_entropy")
