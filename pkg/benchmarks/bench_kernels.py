#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the gather/scatter and pooling primitives on shapes representative of
the two conv trunks (long 1-D signals, square 2-D maps), plus a full
conv-layer forward+backward through the autodiff op with each backend
forced. Run after building the extension:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from lidf import kernels
from lidf.kernels import numpy_backend

try:
    from lidf.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


CASES = []


def case(name):
    def wrap(fn):
        CASES.append((name, fn))
        return fn

    return wrap


rng = np.random.default_rng(0)
x1d = rng.normal(size=(16, 16, 26664)).astype(np.float32)
cols1d = rng.normal(size=(16, 16 * 9, 8886)).astype(np.float32)
x2d = rng.normal(size=(16, 64, 64, 64)).astype(np.float32)
cols2d = rng.normal(size=(16, 64 * 9, 64 * 64)).astype(np.float32)
grad1d = rng.normal(size=(16, 128, 8886)).astype(np.float32)
grad2d = rng.normal(size=(16, 64, 32, 32)).astype(np.float32)


@case("im2col1d  (16,16,26664) k9 s3")
def _(backend):
    backend.im2col1d(x1d, 9, 3)


@case("im2col1d  (16,16,26664) k9 s1")
def _(backend):
    backend.im2col1d(x1d, 9, 1)


@case("col2im1d  (16,144,8886) k9 s3")
def _(backend):
    backend.col2im1d(cols1d, 16, 26664, 9, 3)


@case("im2col2d  (16,64,64,64) 3x3 p1")
def _(backend):
    backend.im2col2d(x2d, 3, 3, 1, 1, 1, 1)


@case("col2im2d  (16,576,4096) 3x3 p1")
def _(backend):
    backend.col2im2d(cols2d, 64, 64, 64, 3, 3, 1, 1, 1, 1)


@case("maxpool1d fwd (16,16,26664) w3 s3")
def _(backend):
    backend.maxpool1d_forward(x1d, 3, 3)


_, argmax1d = numpy_backend.maxpool1d_forward(np.ascontiguousarray(x1d[:, :1]), 3, 3)
gmax = rng.normal(size=argmax1d.shape).astype(np.float32)


@case("maxpool1d bwd (16,1,8888)")
def _(backend):
    backend.maxpool1d_backward(gmax, argmax1d, 26664)


@case("avgpool2d fwd (16,64,64,64) 2x2")
def _(backend):
    backend.avgpool2d_forward(x2d, 2, 2, 2, 2)


@case("avgpool2d bwd (16,64,32,32) 2x2")
def _(backend):
    backend.avgpool2d_backward(grad2d, 64, 64, 2, 2, 2, 2)


def conv_step(backend_module):
    """One conv1d forward+backward through the autodiff op with the chosen
    backend patched in (the matmul stays BLAS either way)."""
    from lidf.tensor_core import Tensor
    from lidf.tensor_core import functional as F

    saved = {n: getattr(kernels, n) for n in (
        "im2col1d", "col2im1d", "im2col2d", "col2im2d",
        "maxpool1d_forward", "maxpool1d_backward",
        "avgpool2d_forward", "avgpool2d_backward",
    )}
    for n in saved:
        setattr(kernels, n, getattr(backend_module, n))
    try:
        x = Tensor(rng.normal(size=(8, 8, 26664)).astype(np.float32), requires_grad=True)
        w = Tensor(rng.normal(size=(16, 8, 9)).astype(np.float32), requires_grad=True)
        out = F.conv1d(x, w, 1)
        pooled = F.maxpool1d(out, 3, 3)
        pooled.sum().backward()
    finally:
        for n, fn in saved.items():
            setattr(kernels, n, fn)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled extension not available; nothing to compare")
        return

    print(f"{'kernel':<36}{'numpy':>10}{'cython':>10}{'speedup':>9}")
    for name, fn in CASES:
        t_np = timeit(lambda: fn(numpy_backend), args.repeats)
        t_cy = timeit(lambda: fn(_ckernels), args.repeats)
        print(f"{name:<36}{t_np * 1e3:>8.1f}ms{t_cy * 1e3:>8.1f}ms{t_np / t_cy:>8.2f}x")

    t_np = timeit(lambda: conv_step(numpy_backend), args.repeats)
    t_cy = timeit(lambda: conv_step(_ckernels), args.repeats)
    name = "conv1d+pool fwd+bwd (8,8,26664)"
    print(f"{name:<36}{t_np * 1e3:>8.1f}ms{t_cy * 1e3:>8.1f}ms{t_np / t_cy:>8.2f}x")


if __name__ == "__main__":
    main()
