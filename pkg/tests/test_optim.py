"""Optimizer update rules."""

import numpy as np
import pytest

from lidf.errors import InvalidStateError
from lidf.tensor_core import Tensor
from lidf.tensor_core.optim import SGD, Adam


def scalar_param(value=0.0):
    return Tensor(np.array([value], dtype=np.float32), requires_grad=True)


def test_sgd_single_step():
    p = scalar_param(0.0)
    p.grad = np.array([1.0], dtype=np.float32)
    SGD([p], lr=0.1).step()
    assert p.data[0] == pytest.approx(-0.1)
    assert p.grad is None  # cleared after the step


def test_sgd_momentum_accumulates():
    p = scalar_param(0.0)
    opt = SGD([p], lr=1.0, momentum=0.5)
    for _ in range(2):
        p.grad = np.array([1.0], dtype=np.float32)
        opt.step()
    # v1 = 1, v2 = 1.5 -> total displacement 2.5
    assert p.data[0] == pytest.approx(-2.5)


def test_adam_first_step_is_signed_lr():
    for g in (0.37, -2.4, 11.0):
        p = scalar_param(0.0)
        opt = Adam([p], lr=1e-3)
        p.grad = np.array([g], dtype=np.float32)
        opt.step()
        assert p.data[0] == pytest.approx(-1e-3 * np.sign(g), abs=1e-6)


def test_zero_gradient_leaves_parameter_unchanged():
    p = scalar_param(1.25)
    opt = Adam([p])
    p.grad = np.zeros(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(1.25)


def test_missing_gradient_raises():
    p = scalar_param(0.0)
    for opt in (SGD([p], lr=0.1), Adam([p])):
        with pytest.raises(InvalidStateError):
            opt.step()


def test_adam_bias_correction_over_steps():
    # constant gradient: every corrected step is ~ -lr after warmup
    p = scalar_param(0.0)
    opt = Adam([p], lr=0.01)
    previous = 0.0
    for _ in range(5):
        p.grad = np.array([3.0], dtype=np.float32)
        opt.step()
        delta = p.data[0] - previous
        previous = float(p.data[0])
        assert delta == pytest.approx(-0.01, rel=1e-3)
