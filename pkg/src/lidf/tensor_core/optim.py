"""Parameter-update rules. Steps mutate parameters in place and clear their
gradients afterwards; stepping with a missing gradient is an error."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import InvalidStateError
from .tensor import Tensor


class Optimizer:
    def __init__(self, parameters: Sequence[Tensor]):
        self.parameters = list(parameters)

    def _gradient(self, index: int, param: Tensor) -> np.ndarray:
        if param.grad is None:
            raise InvalidStateError(
                f"parameter {index} ({param.name or param.shape}) has no gradient; "
                "run backward() before step()"
            )
        return param.grad

    def step(self) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()


class SGD(Optimizer):
    def __init__(self, parameters: Sequence[Tensor], lr: float, momentum: float = 0.0):
        super().__init__(parameters)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        for i, p in enumerate(self.parameters):
            g = self._gradient(i, p)
            ftype = p.dtype.type
            if self.momentum:
                v = self._velocity[i]
                v *= ftype(self.momentum)
                v += g
                g = v
            p.data -= ftype(self.lr) * g
        self.zero_grad()


class Adam(Optimizer):
    def __init__(self, parameters: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.parameters]
        self._v = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        self._step_count += 1
        t = self._step_count
        for i, p in enumerate(self.parameters):
            g = self._gradient(i, p)
            ftype = p.dtype.type
            b1, b2 = ftype(self.beta1), ftype(self.beta2)
            m, v = self._m[i], self._v[i]
            m *= b1
            m += (ftype(1.0) - b1) * g
            v *= b2
            v += (ftype(1.0) - b2) * g * g
            m_hat = m / (ftype(1.0) - b1 ** t)
            v_hat = v / (ftype(1.0) - b2 ** t)
            p.data -= ftype(self.lr) * m_hat / (np.sqrt(v_hat) + ftype(self.eps))
        self.zero_grad()
