"""The three classifier architectures, built from configuration.

Shared conventions: every convolution is bias-free, is followed by batch
normalization and ReLU, and all reported shapes come from the floor output
formulas (the summary reflects what the code actually computes, not any
published rounding).

Architectures:
  * waveform 1-D ConvNet: strided entry conv, two conv/max-pool blocks,
    global temporal max pool, dense head.
  * image 2-D ConvNet: four conv-conv-avgpool blocks, flatten, dense head.
  * image 2-D ConvNet with residual shortcuts, channel+spatial attention,
    and a bi-directional GRU over spectrogram columns.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfigError
from .tensor_core import Tensor, concat
from .tensor_core import functional as F
from .tensor_core import nn


@dataclass(frozen=True)
class Arch1DConfig:
    """Raw-waveform model. Defaults give the published layer stack exactly:
    128 entry filters, kernel 3, blocks of (2, 1) conv/pool pairs."""

    first_layer_filters: int = 128
    kernel_size: int = 3
    dropout_rate: float = 0.1
    block1_layers: int = 2
    block2_layers: int = 1
    num_classes: int = 6
    input_samples: int = 80000


@dataclass(frozen=True)
class Arch2DConfig:
    """Log-Mel image models. Defaults: 64 entry filters, kernel 3, GRU with
    768 hidden units per direction, 128x128 input."""

    first_layer_filters: int = 64
    kernel_size: int = 3
    dropout_rates: Tuple[float, float] = (0.2, 0.1)
    gru_hidden_per_direction: int = 768
    image_size: int = 128
    use_attention: bool = True
    use_gru: bool = True
    use_residual: bool = True
    num_classes: int = 6


@dataclass(frozen=True)
class LayerInfo:
    name: str
    kind: str  # conv | bn | act | pool | dense | gru | attn | proj | dropout | reshape
    output_shape: Tuple[int, ...]
    params: int


@dataclass
class ModelGraph:
    """A built architecture plus its layer-by-layer accounting."""

    module: nn.Module
    summary: List[LayerInfo]
    architecture: str
    config: object

    def total_params(self) -> int:
        return sum(p.size for p in self.module.parameters())

    def layer_params(self, *kinds: str) -> List[int]:
        return [row.params for row in self.summary if row.kind in kinds]

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        for module in self.module.modules():
            if isinstance(module, nn.Dropout):
                module.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return self.module(x)


# ---------------------------------------------------------------------------
# attention blocks


class ChannelAttention(nn.Module):
    """Squeeze-excite gating: global average pool -> bottleneck MLP ->
    sigmoid -> per-channel scale."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if channels % reduction != 0:
            raise InvalidConfigError(
                f"channel attention: {channels} channels not divisible by reduction {reduction}"
            )
        self.squeeze = nn.Linear(channels, channels // reduction, rng, dtype)
        self.excite = nn.Linear(channels // reduction, channels, rng, dtype)

    def forward(self, x):
        batched = x.ndim == 4
        spatial = (2, 3) if batched else (1, 2)
        s = x.mean(axis=spatial)
        gate = F.sigmoid(self.excite(F.relu(self.squeeze(s))))
        gate_shape = gate.shape + (1, 1)
        return x * gate.reshape(gate_shape)


class SpatialAttention(nn.Module):
    """Channel-pooled mean/max maps -> 7x7 conv -> sigmoid -> per-position scale."""

    def __init__(self, rng: np.random.Generator, kernel: int = 7, dtype=np.float32):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel, stride=1, padding=kernel // 2, rng=rng, dtype=dtype)

    def forward(self, x):
        channel_axis = 1 if x.ndim == 4 else 0
        mean_map = x.mean(axis=channel_axis, keepdims=True)
        max_map = x.max(axis=channel_axis, keepdims=True)
        mask = F.sigmoid(self.conv(concat([mean_map, max_map], axis=channel_axis)))
        return x * mask


class ResidualConvUnit(nn.Module):
    """conv -> BN, plus an identity shortcut (1x1 projection when the channel
    count changes), then ReLU."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, kernel, stride=1, padding=kernel // 2, rng=rng, dtype=dtype)
        self.bn = nn.BatchNorm(c_out, spatial_ndim=2, dtype=dtype)
        self.shortcut = (
            None if c_in == c_out
            else nn.Conv2d(c_in, c_out, 1, stride=1, padding=0, rng=rng, dtype=dtype)
        )

    def forward(self, x):
        main = self.bn(self.conv(x))
        skip = x if self.shortcut is None else self.shortcut(x)
        return F.relu(main + skip)


class ConvBNRelu2d(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, kernel, stride=1, padding=kernel // 2, rng=rng, dtype=dtype)
        self.bn = nn.BatchNorm(c_out, spatial_ndim=2, dtype=dtype)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


# ---------------------------------------------------------------------------
# 1-D ConvNet


def _conv1d_out(length: int, kernel: int, stride: int, what: str) -> int:
    if length < kernel:
        raise InvalidConfigError(
            f"{what}: input length {length} shorter than kernel/window {kernel}"
        )
    return (length - kernel) // stride + 1


def plan_1d_shapes(config: Arch1DConfig) -> List[Tuple[str, int]]:
    """Temporal extent after each stage; raises InvalidConfigError naming the
    stage that underflows."""
    k = config.kernel_size
    plan = []
    length = _conv1d_out(config.input_samples, k, 3, "conv1")
    plan.append(("conv1", length))
    for i in range(config.block1_layers):
        length = _conv1d_out(length, k, 1, f"block1.conv{i + 1}")
        plan.append((f"block1.conv{i + 1}", length))
        length = _conv1d_out(length, 3, 3, f"block1.pool{i + 1}")
        plan.append((f"block1.pool{i + 1}", length))
    length = _conv1d_out(length, k, 1, "conv_mid")
    plan.append(("conv_mid", length))
    length = _conv1d_out(length, 3, 3, "pool_mid")
    plan.append(("pool_mid", length))
    for i in range(config.block2_layers):
        length = _conv1d_out(length, k, 1, f"block2.conv{i + 1}")
        plan.append((f"block2.conv{i + 1}", length))
        length = _conv1d_out(length, 3, 3, f"block2.pool{i + 1}")
        plan.append((f"block2.pool{i + 1}", length))
    length = _conv1d_out(length, k, 1, "conv_last")
    plan.append(("conv_last", length))
    return plan


class ConvNet1D(nn.Module):
    def __init__(self, config: Arch1DConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        f, k = config.first_layer_filters, config.kernel_size
        stages: List[nn.Module] = []

        def conv_unit(c_in, c_out, stride):
            return [
                nn.Conv1d(c_in, c_out, k, stride, rng, dtype),
                nn.BatchNorm(c_out, spatial_ndim=1, dtype=dtype),
                nn.ReLU(),
            ]

        stages += conv_unit(1, f, 3)
        for _ in range(config.block1_layers):
            stages += conv_unit(f, f, 1)
            stages.append(nn.MaxPool1d(3, 3))
        stages += conv_unit(f, 2 * f, 1)
        stages.append(nn.MaxPool1d(3, 3))
        for _ in range(config.block2_layers):
            stages += conv_unit(2 * f, 2 * f, 1)
            stages.append(nn.MaxPool1d(3, 3))
        stages += conv_unit(2 * f, 4 * f, 1)
        self.trunk = nn.Sequential(*stages)
        self.pool = nn.GlobalMaxPool1d()
        self.dropout = nn.Dropout(config.dropout_rate)
        self.head = nn.Linear(4 * f, config.num_classes, rng, dtype)

    def forward(self, x):
        h = self.pool(self.trunk(x))
        return self.head(self.dropout(h))


def build_1d_convnet(config: Arch1DConfig, rng: Optional[np.random.Generator] = None,
                     dtype=np.float32) -> ModelGraph:
    rng = rng if rng is not None else np.random.default_rng(0)
    plan = dict(plan_1d_shapes(config))  # validates before any allocation
    f, k = config.first_layer_filters, config.kernel_size
    module = ConvNet1D(config, rng, dtype)

    rows: List[LayerInfo] = []

    def conv_rows(name, c_in, c_out, length):
        rows.append(LayerInfo(name, "conv", (c_out, length), c_out * c_in * k))
        rows.append(LayerInfo(f"{name}.bn", "bn", (c_out, length), 2 * c_out))
        rows.append(LayerInfo(f"{name}.relu", "act", (c_out, length), 0))

    conv_rows("conv1", 1, f, plan["conv1"])
    for i in range(config.block1_layers):
        conv_rows(f"block1.conv{i + 1}", f, f, plan[f"block1.conv{i + 1}"])
        rows.append(LayerInfo(f"block1.pool{i + 1}", "pool", (f, plan[f"block1.pool{i + 1}"]), 0))
    conv_rows("conv_mid", f, 2 * f, plan["conv_mid"])
    rows.append(LayerInfo("pool_mid", "pool", (2 * f, plan["pool_mid"]), 0))
    for i in range(config.block2_layers):
        conv_rows(f"block2.conv{i + 1}", 2 * f, 2 * f, plan[f"block2.conv{i + 1}"])
        rows.append(LayerInfo(f"block2.pool{i + 1}", "pool", (2 * f, plan[f"block2.pool{i + 1}"]), 0))
    conv_rows("conv_last", 2 * f, 4 * f, plan["conv_last"])
    rows.append(LayerInfo("global_max_pool", "pool", (4 * f, 1), 0))
    rows.append(LayerInfo("dropout", "dropout", (4 * f,), 0))
    rows.append(LayerInfo("dense", "dense", (config.num_classes,), 4 * f * config.num_classes))

    return ModelGraph(module, rows, "1d", config)


# ---------------------------------------------------------------------------
# 2-D ConvNets


def plan_2d_shapes(config: Arch2DConfig) -> List[Tuple[str, Tuple[int, int, int]]]:
    """(channels, H, W) after each block; raises when pooling underflows."""
    f = config.first_layer_filters
    size = config.image_size
    if config.kernel_size % 2 == 0:
        raise InvalidConfigError(f"2d kernel must be odd to preserve shape, got {config.kernel_size}")
    plan = []
    h = w = size
    c_prev = 3
    for i in range(4):
        c = f * (2**i)
        if h < 2 or w < 2:
            raise InvalidConfigError(f"block{i + 1}: spatial extent {h}x{w} too small to pool")
        h, w = (h - 2) // 2 + 1, (w - 2) // 2 + 1
        plan.append((f"block{i + 1}", (c, h, w)))
        c_prev = c
    return plan


class ConvBlock2D(nn.Module):
    """Two conv units followed by 2x2 average pooling."""

    def __init__(self, c_in: int, c_out: int, kernel: int, residual: bool,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        unit = ResidualConvUnit if residual else ConvBNRelu2d
        self.unit1 = unit(c_in, c_out, kernel, rng, dtype)
        self.unit2 = unit(c_out, c_out, kernel, rng, dtype)
        self.pool = nn.AvgPool2d((2, 2), (2, 2))

    def forward(self, x):
        return self.pool(self.unit2(self.unit1(x)))


class ConvNet2D(nn.Module):
    """Plain 2-D variant: conv trunk, flatten, two-linear head."""

    def __init__(self, config: Arch2DConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        f = config.first_layer_filters
        k = config.kernel_size
        self.block1 = ConvBlock2D(3, f, k, False, rng, dtype)
        self.block2 = ConvBlock2D(f, 2 * f, k, False, rng, dtype)
        self.block3 = ConvBlock2D(2 * f, 4 * f, k, False, rng, dtype)
        self.block4 = ConvBlock2D(4 * f, 8 * f, k, False, rng, dtype)
        side = config.image_size // 16
        self.flat_features = 8 * f * side * side
        self.dropout1 = nn.Dropout(config.dropout_rates[0])
        self.fc1 = nn.Linear(self.flat_features, 256, rng, dtype)
        self.dropout2 = nn.Dropout(config.dropout_rates[1])
        self.fc2 = nn.Linear(256, config.num_classes, rng, dtype)

    def forward(self, x):
        h = self.block4(self.block3(self.block2(self.block1(x))))
        flat_shape = (h.shape[0], self.flat_features) if h.ndim == 4 else (self.flat_features,)
        h = h.reshape(flat_shape)
        h = self.fc1(self.dropout1(h))
        return self.fc2(self.dropout2(h))


class ConvNet2DAttnGRU(nn.Module):
    """Residual trunk, channel+spatial attention, column-sequence bi-GRU,
    per-step embedding, temporal mean pool, two-linear head."""

    def __init__(self, config: Arch2DConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        f = config.first_layer_filters
        k = config.kernel_size
        g = config.gru_hidden_per_direction
        res = config.use_residual
        self.block1 = ConvBlock2D(3, f, k, res, rng, dtype)
        self.block2 = ConvBlock2D(f, 2 * f, k, res, rng, dtype)
        self.block3 = ConvBlock2D(2 * f, 4 * f, k, res, rng, dtype)
        self.block4 = ConvBlock2D(4 * f, 8 * f, k, res, rng, dtype)
        self.use_attention = config.use_attention
        if config.use_attention:
            self.channel_attn = ChannelAttention(8 * f, 16, rng, dtype)
            self.spatial_attn = SpatialAttention(rng, 7, dtype)
        side = config.image_size // 16
        self.seq_features = 8 * f * side
        self.gru = nn.BiGRU(self.seq_features, g, rng, dtype)
        self.embed = nn.Linear(2 * g, g, rng, dtype)
        self.dropout1 = nn.Dropout(config.dropout_rates[0])
        self.fc1 = nn.Linear(g, 256, rng, dtype)
        self.dropout2 = nn.Dropout(config.dropout_rates[1])
        self.fc2 = nn.Linear(256, config.num_classes, rng, dtype)

    def forward(self, x):
        h = self.block4(self.block3(self.block2(self.block1(x))))
        if self.use_attention:
            h = self.spatial_attn(self.channel_attn(h))
        # columns become timesteps: (.., C, H, W) -> (.., W, C*H)
        batched = h.ndim == 4
        if batched:
            b, c, hh, ww = h.shape
            seq = h.transpose((0, 3, 1, 2)).reshape((b, ww, c * hh))
        else:
            c, hh, ww = h.shape
            seq = h.transpose((2, 0, 1)).reshape((ww, c * hh))
        states = self.gru(seq)
        embedded = self.embed(states)
        pooled = embedded.mean(axis=embedded.ndim - 2)  # over time
        out = self.fc1(self.dropout1(pooled))
        return self.fc2(self.dropout2(out))


def _block_rows(rows, name, c_in, c_out, k, shape_after_pool, residual):
    h2, w2 = shape_after_pool[1], shape_after_pool[2]
    h, w = h2 * 2, w2 * 2
    for idx, cin in ((1, c_in), (2, c_out)):
        rows.append(LayerInfo(f"{name}.conv{idx}", "conv", (c_out, h, w), c_out * cin * k * k))
        if residual and cin != c_out:
            rows.append(LayerInfo(f"{name}.conv{idx}.shortcut", "proj", (c_out, h, w), c_out * cin))
        rows.append(LayerInfo(f"{name}.conv{idx}.bn", "bn", (c_out, h, w), 2 * c_out))
        rows.append(LayerInfo(f"{name}.conv{idx}.relu", "act", (c_out, h, w), 0))
    rows.append(LayerInfo(f"{name}.avgpool", "pool", (c_out, h2, w2), 0))


def build_2d_convnet(config: Arch2DConfig, rng: Optional[np.random.Generator] = None,
                     dtype=np.float32) -> ModelGraph:
    """Attention/GRU/residual-free variant; flags in the config are ignored."""
    config = dataclasses.replace(config, use_attention=False, use_gru=False, use_residual=False)
    rng = rng if rng is not None else np.random.default_rng(0)
    plan = plan_2d_shapes(config)
    f, k = config.first_layer_filters, config.kernel_size
    module = ConvNet2D(config, rng, dtype)

    rows: List[LayerInfo] = []
    c_prev = 3
    for i, (name, (c, h, w)) in enumerate(plan):
        _block_rows(rows, name, c_prev, c, k, (c, h, w), residual=False)
        c_prev = c
    rows.append(LayerInfo("flatten", "reshape", (module.flat_features,), 0))
    rows.append(LayerInfo("dropout1", "dropout", (module.flat_features,), 0))
    rows.append(LayerInfo("fc1", "dense", (256,), module.flat_features * 256))
    rows.append(LayerInfo("dropout2", "dropout", (256,), 0))
    rows.append(LayerInfo("fc2", "dense", (config.num_classes,), 256 * config.num_classes))
    return ModelGraph(module, rows, "2d", config)


def build_2d_attn_gru(config: Arch2DConfig, rng: Optional[np.random.Generator] = None,
                      dtype=np.float32) -> ModelGraph:
    rng = rng if rng is not None else np.random.default_rng(0)
    plan = plan_2d_shapes(config)
    f, k, g = config.first_layer_filters, config.kernel_size, config.gru_hidden_per_direction
    module = ConvNet2DAttnGRU(config, rng, dtype)

    rows: List[LayerInfo] = []
    c_prev = 3
    for name, (c, h, w) in plan:
        _block_rows(rows, name, c_prev, c, k, (c, h, w), residual=config.use_residual)
        c_prev = c
    c, h, w = plan[-1][1]
    if config.use_attention:
        attn_params = sum(p.size for p in module.channel_attn.parameters())
        rows.append(LayerInfo("channel_attention", "attn", (c, h, w), attn_params))
        rows.append(
            LayerInfo("spatial_attention", "attn", (c, h, w),
                      sum(p.size for p in module.spatial_attn.parameters()))
        )
    rows.append(LayerInfo("to_sequence", "reshape", (w, c * h), 0))
    gru_params = sum(p.size for p in module.gru.parameters())
    rows.append(LayerInfo("bigru", "gru", (w, 2 * g), gru_params))
    rows.append(LayerInfo("embedding", "dense", (w, g), 2 * g * g))
    rows.append(LayerInfo("temporal_mean", "pool", (g,), 0))
    rows.append(LayerInfo("dropout1", "dropout", (g,), 0))
    rows.append(LayerInfo("fc1", "dense", (256,), g * 256))
    rows.append(LayerInfo("dropout2", "dropout", (256,), 0))
    rows.append(LayerInfo("fc2", "dense", (config.num_classes,), 256 * config.num_classes))
    return ModelGraph(module, rows, "2d-attn-gru", config)


def build_model(architecture: str, config, rng: Optional[np.random.Generator] = None,
                dtype=np.float32) -> ModelGraph:
    if architecture == "1d":
        return build_1d_convnet(config, rng, dtype)
    if architecture == "2d":
        return build_2d_convnet(config, rng, dtype)
    if architecture == "2d-attn-gru":
        return build_2d_attn_gru(config, rng, dtype)
    raise InvalidConfigError(f"unknown architecture {architecture!r}")


def summarize(model: ModelGraph) -> str:
    """Aligned text table of (layer, output shape, parameters) with a totals
    row; mirrors the structure the config was derived from."""
    lines = [f"architecture: {model.architecture}"]
    name_w = max(len(r.name) for r in model.summary) + 2
    shape_w = max(len(str(tuple(r.output_shape))) for r in model.summary) + 2
    lines.append(f"{'layer':<{name_w}}{'output shape':<{shape_w}}{'params':>12}")
    for r in model.summary:
        lines.append(f"{r.name:<{name_w}}{str(tuple(r.output_shape)):<{shape_w}}{r.params:>12,}")
    summed = sum(r.params for r in model.summary)
    lines.append(f"{'total':<{name_w}}{'':<{shape_w}}{summed:>12,}")
    actual = model.total_params()
    if actual != summed:
        lines.append(f"(module holds {actual:,} trainable values)")
    return "\n".join(lines)


def summary_records(model: ModelGraph) -> List[dict]:
    return [
        {"name": r.name, "kind": r.kind, "output_shape": list(r.output_shape), "params": r.params}
        for r in model.summary
    ]
