"""Layer abstractions over the functional ops.

Module tracks parameters, buffers, and submodules in registration order,
which doubles as the checkpoint serialization order. Weight layouts follow
the op contracts: Conv* store (C_out, C_in, K...), Linear stores
(F_in, F_out), and none of them carry a bias (the architectures are
bias-free by construction).
"""

from __future__ import annotations

from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import InvalidArgumentError
from . import functional as F
from .tensor import Tensor, concat, stack


class Parameter(Tensor):
    """Trainable leaf tensor. Keeps the dtype of the array it is given."""

    def __init__(self, data, dtype=None, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Base class; attribute assignment registers parameters and submodules."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def register_buffer(self, key: str, value: np.ndarray) -> None:
        self._buffers[key] = value
        object.__setattr__(self, key, value)

    def _set_buffer(self, key: str, value: np.ndarray) -> None:
        """Replace a registered buffer (e.g. after a dtype cast)."""
        self._buffers[key] = value
        object.__setattr__(self, key, value)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, param in self._params.items():
            yield f"{prefix}{key}", param
        for key, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{key}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for key, buf in self._buffers.items():
            yield f"{prefix}{key}", buf
        for key, module in self._modules.items():
            yield from module.named_buffers(f"{prefix}{key}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for module in self._modules.values():
            yield from module.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Module":
        """Cast all parameters and buffers in place (float64 for grad checks)."""
        for module in self.modules():
            for p in module._params.values():
                p.cast_(dtype)
            for key in list(module._buffers):
                module._set_buffer(key, module._buffers[key].astype(dtype))
        return self

    def load_state(self, state: dict) -> None:
        """Copy arrays from a {name: array} mapping into parameters/buffers."""
        for name, param in self.named_parameters():
            if name not in state:
                raise InvalidArgumentError(f"missing parameter {name!r} in state")
            arr = state[name]
            if tuple(arr.shape) != param.shape:
                raise InvalidArgumentError(
                    f"parameter {name!r} has shape {param.shape}, state has {arr.shape}"
                )
            param.data = np.ascontiguousarray(arr, dtype=param.dtype)
        for name, buf in self.named_buffers():
            if name in state:
                np.copyto(buf, state[name].astype(buf.dtype))

    def state_arrays(self) -> List[Tuple[str, np.ndarray]]:
        """Parameters then buffers, in registration order."""
        out = [(name, p.data) for name, p in self.named_parameters()]
        out += [(name, b) for name, b in self.named_buffers()]
        return out


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, f"layer{i}", layer)
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.weight = Parameter(uniform_init(rng, (c_out, c_in, kernel), c_in * kernel, dtype))

    def forward(self, x):
        return F.conv1d(x, self.weight, self.stride)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: Union[int, Tuple[int, int]],
                 stride=1, padding=0, rng: Optional[np.random.Generator] = None, dtype=np.float32):
        super().__init__()
        kh, kw = F._as_pair(kernel)
        self.stride = F._as_pair(stride)
        self.padding = F._as_pair(padding)
        self.weight = Parameter(uniform_init(rng, (c_out, c_in, kh, kw), c_in * kh * kw, dtype))

    def forward(self, x):
        return F.conv2d(x, self.weight, self.stride, self.padding)


class Linear(Module):
    def __init__(self, f_in: int, f_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.weight = Parameter(uniform_init(rng, (f_in, f_out), f_in, dtype))

    def forward(self, x):
        return F.linear(x, self.weight)


class MaxPool1d(Module):
    def __init__(self, window: int, stride: int):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, x):
        return F.maxpool1d(x, self.window, self.stride)


class AvgPool2d(Module):
    def __init__(self, window, stride):
        super().__init__()
        self.window = F._as_pair(window)
        self.stride = F._as_pair(stride)

    def forward(self, x):
        return F.avgpool2d(x, self.window, self.stride)


class GlobalMaxPool1d(Module):
    """Max over the full temporal axis: (C, L) -> (C,) or (B, C, L) -> (B, C)."""

    def forward(self, x):
        return x.max(axis=x.ndim - 1)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Sigmoid(Module):
    def forward(self, x):
        return F.sigmoid(x)


class Tanh(Module):
    def forward(self, x):
        return F.tanh(x)


class Dropout(Module):
    def __init__(self, rate: float, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.rate, self.training, self.rng)


class BatchNorm(Module):
    """Batch normalization with epsilon 1e-5 and running-stat momentum 0.1.

    `spatial_ndim` is the number of trailing spatial axes (1 for (C, L) data,
    2 for (C, H, W)); it disambiguates whether a leading batch axis is present.
    """

    def __init__(self, channels: int, spatial_ndim: int, momentum: float = 0.1,
                 eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.spatial_ndim = spatial_ndim
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x):
        channel_axis = x.ndim - 1 - self.spatial_ndim
        if channel_axis not in (0, 1):
            raise InvalidArgumentError(
                f"batchnorm: expected {self.spatial_ndim + 1}D or {self.spatial_ndim + 2}D input, "
                f"got shape {x.shape}"
            )
        return F.batchnorm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, channel_axis, self.momentum, self.eps,
        )


class GRUCellWeights(Module):
    """Weights for one GRU direction, gate order (z, r, n)."""

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.w_ih = Parameter(uniform_init(rng, (input_size, 3 * hidden), hidden, dtype))
        self.w_hh = Parameter(uniform_init(rng, (hidden, 3 * hidden), hidden, dtype))
        self.b_ih = Parameter(uniform_init(rng, (3 * hidden,), hidden, dtype))
        self.b_hh = Parameter(uniform_init(rng, (3 * hidden,), hidden, dtype))


class BiGRU(Module):
    """Bi-directional GRU over (T, F) or (B, T, F); outputs per-step states of
    both directions concatenated to 2*hidden features.

    Cell update (z = update gate, r = reset gate, n = tanh candidate):
        z = sigmoid(x W_ih[z] + b_ih[z] + h W_hh[z] + b_hh[z])
        r = sigmoid(x W_ih[r] + b_ih[r] + h W_hh[r] + b_hh[r])
        n = tanh(x W_ih[n] + b_ih[n] + r * (h W_hh[n] + b_hh[n]))
        h' = (1 - z) * n + z * h
    """

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if hidden < 1:
            raise InvalidArgumentError(f"bigru: hidden must be >= 1, got {hidden}")
        self.hidden = hidden
        self.fw = GRUCellWeights(input_size, hidden, rng, dtype)
        self.bw = GRUCellWeights(input_size, hidden, rng, dtype)

    def _step(self, cell: GRUCellWeights, x_t: Tensor, h: Tensor) -> Tensor:
        hid = self.hidden
        gi = F.linear(x_t, cell.w_ih) + cell.b_ih
        gh = F.linear(h, cell.w_hh) + cell.b_hh
        axis = gi.ndim - 1
        z = F.sigmoid(gi.narrow(axis, 0, hid) + gh.narrow(axis, 0, hid))
        r = F.sigmoid(gi.narrow(axis, hid, hid) + gh.narrow(axis, hid, hid))
        n = F.tanh(gi.narrow(axis, 2 * hid, hid) + r * gh.narrow(axis, 2 * hid, hid))
        return (1.0 - z) * n + z * h

    def _run(self, cell: GRUCellWeights, steps: List[Tensor], batched: bool) -> List[Tensor]:
        h_shape = (steps[0].shape[0], self.hidden) if batched else (self.hidden,)
        h = Tensor(np.zeros(h_shape, dtype=steps[0].dtype))
        out = []
        for x_t in steps:
            h = self._step(cell, x_t, h)
            out.append(h)
        return out

    def forward(self, x):
        batched = x.ndim == 3
        if not batched and x.ndim != 2:
            raise InvalidArgumentError(f"bigru: input must be (T, F) or (B, T, F), got {x.shape}")
        time_axis = 1 if batched else 0
        t_len = x.shape[time_axis]
        if t_len < 1:
            raise InvalidArgumentError("bigru: sequence must have at least one step")
        steps = [
            x.narrow(time_axis, t, 1).reshape(
                (x.shape[0], x.shape[2]) if batched else (x.shape[1],)
            )
            for t in range(t_len)
        ]
        fw_states = self._run(self.fw, steps, batched)
        bw_states = self._run(self.bw, list(reversed(steps)), batched)
        bw_states.reverse()
        per_step = [concat([f, b], axis=f.ndim - 1) for f, b in zip(fw_states, bw_states)]
        return stack(per_step, axis=time_axis)
