"""Finite-difference gradient verification.

The checker compares the analytic gradient of a scalar loss against central
differences, coordinate by coordinate. It runs in float64 only: float32
round-off is the same order as the truncation error at usable epsilons and
produces false failures.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import InvalidArgumentError
from .tensor import Tensor, no_grad


def grad_check(
    loss_fn: Callable[[], Tensor],
    parameter: Tensor,
    epsilon: float = 1e-3,
    max_coords: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic and finite-difference gradients.

    loss_fn rebuilds the forward pass from scratch on every call and must be
    deterministic across calls (fix any internal RNG). When the parameter has
    more than max_coords elements a random subset of coordinates is probed.

    Relative error per coordinate: |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
    """
    if parameter.data.dtype != np.float64:
        raise InvalidArgumentError("grad_check requires float64 parameters (64-bit shadow mode)")

    parameter.zero_grad()
    loss = loss_fn()
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise InvalidArgumentError("grad_check: loss_fn must return a scalar tensor")
    loss.backward()
    if parameter.grad is None:
        raise InvalidArgumentError("grad_check: parameter did not receive a gradient")
    analytic = parameter.grad.reshape(-1).copy()
    parameter.zero_grad()

    flat = parameter.data.reshape(-1)
    n = flat.size
    if n <= max_coords:
        coords = np.arange(n)
    else:
        coords = (rng or np.random.default_rng(0)).choice(n, size=max_coords, replace=False)

    worst = 0.0
    with no_grad():
        for idx in coords:
            saved = flat[idx]
            flat[idx] = saved + epsilon
            loss_plus = loss_fn().item()
            flat[idx] = saved - epsilon
            loss_minus = loss_fn().item()
            flat[idx] = saved
            g_fd = (loss_plus - loss_minus) / (2.0 * epsilon)
            g_an = analytic[idx]
            rel = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
            worst = max(worst, rel)
    return worst
