"""Autodiff engine behavior: graph mechanics, broadcasting, and gradients of
the shape/reduction primitives (checked against finite differences)."""

import numpy as np
import pytest

from lidf.errors import InvalidArgumentError
from lidf.tensor_core import Tensor, concat, grad_check, no_grad, stack
from lidf.tensor_core import functional as F

from conftest import spaced_values


def f64(rng, shape):
    return Tensor(rng.normal(size=shape), dtype=np.float64, requires_grad=True)


def test_tensor_defaults_to_float32():
    x = Tensor([[1, 2], [3, 4]])
    assert x.dtype == np.float32
    assert x.shape == (2, 2)
    assert x.size == 4


def test_scalar_only_backward():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        (x * 2.0).backward()


def test_gradient_accumulates_across_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * 3.0 + x * 5.0
    y.sum().backward()
    assert x.grad.tolist() == [8.0]


def test_diamond_graph_backward_order():
    # both paths must contribute before the shared parent propagates
    x = Tensor(np.array([1.5]), requires_grad=True)
    a = x * 2.0
    out = (a * a).sum()
    out.backward()
    assert x.grad[0] == pytest.approx(2 * 4 * 1.5)  # d/dx (2x)^2 = 8x


def test_no_grad_blocks_recording():
    x = Tensor(np.ones(4), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert y._backward_fn is None


def test_dtype_mismatch_raises():
    a = Tensor(np.ones(3), dtype=np.float32)
    b = Tensor(np.ones(3), dtype=np.float64)
    with pytest.raises(InvalidArgumentError):
        a + b


def test_broadcast_add_unbroadcasts_gradient(rng):
    x = Tensor(rng.normal(size=(4, 3, 5)), dtype=np.float64, requires_grad=True)
    bias = Tensor(rng.normal(size=(3, 1)), dtype=np.float64, requires_grad=True)
    ((x + bias) * (x + bias)).sum().backward()
    assert bias.grad.shape == (3, 1)
    assert x.grad.shape == (4, 3, 5)


@pytest.mark.parametrize("op_name", ["add", "mul", "matmul", "reshape", "transpose",
                                     "sum", "mean", "max", "narrow", "concat", "stack"])
def test_primitive_gradients_match_finite_differences(op_name, rng):
    a = f64(rng, (3, 4))
    b = f64(rng, (3, 4))
    m = f64(rng, (4, 5))

    builders = {
        "add": lambda: ((a + b) * (a + b)).sum(),
        "mul": lambda: ((a * b) + (a * b)).sum(),
        "matmul": lambda: ((a @ m) * (a @ m)).sum(),
        "reshape": lambda: (a.reshape((2, 6)) * a.reshape((2, 6))).sum(),
        "transpose": lambda: (a.transpose((1, 0)) @ b).sum(),
        "sum": lambda: (a.sum(axis=1) * a.sum(axis=1)).sum(),
        "mean": lambda: (a.mean(axis=0) * a.mean(axis=0)).sum(),
        "max": lambda: (a_spaced.max(axis=1) * a_spaced.max(axis=1)).sum(),
        "narrow": lambda: (a.narrow(1, 1, 2) * a.narrow(1, 2, 2)).sum(),
        "concat": lambda: (concat([a, b], axis=1) * concat([b, a], axis=1)).sum(),
        "stack": lambda: (stack([a, b], axis=0) * stack([a, b], axis=0)).sum(),
    }
    a_spaced = Tensor(spaced_values(rng, (3, 4)), dtype=np.float64, requires_grad=True)
    wrt = a_spaced if op_name == "max" else a
    assert grad_check(builders[op_name], wrt, epsilon=1e-4) < 1e-6


def test_max_tie_gradient_goes_to_first():
    x = Tensor(np.array([[1.0, 1.0, 0.5]]), requires_grad=True)
    x.max(axis=1).sum().backward()
    assert x.grad.tolist() == [[1.0, 0.0, 0.0]]


def test_cast_roundtrip_preserves_values():
    x = Tensor(np.linspace(-1, 1, 7, dtype=np.float32))
    x.cast_(np.float64)
    assert x.dtype == np.float64
    x.cast_(np.float32)
    assert np.allclose(x.data, np.linspace(-1, 1, 7, dtype=np.float32))


def test_finite_outputs_through_deep_stack(rng):
    # forward invariant: finite inputs + valid parameters -> finite activations
    x = Tensor(rng.normal(size=(2, 3, 33)).astype(np.float32))
    w1 = Tensor(rng.normal(size=(4, 3, 5)).astype(np.float32))
    w2 = Tensor(rng.normal(size=(5, 4, 3)).astype(np.float32))
    h = F.relu(F.conv1d(x, w1, 2))
    h = F.maxpool1d(h, 2, 2)
    h = F.tanh(F.conv1d(h, w2, 1))
    assert np.all(np.isfinite(h.data))
