"""Densely connected convolutional classifier.

Architecture: initial 7x7/2 convolution and 3x3/2 max pool, four dense
blocks separated by compressing transition layers, then a global average
pool and a linear classification head. Inside a block, layer ``l``
receives the channel-wise concatenation of the block input and all
previous layers' outputs, and every composite layer is
BN -> ReLU -> 1x1 conv (bottleneck) -> BN -> ReLU -> 3x3 conv, emitting
``growth_rate`` new channels. With the default configuration
(blocks 6/12/24/16, growth 32, 64 initial channels, 0.5 compression)
the weighted-layer count is 121.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from imagedx.errors import ConfigError, DomainError, ShapeMismatch
from imagedx.nn.layers import (
    AvgPool2d,
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool2d,
    Module,
    ReLU,
)


@dataclass(frozen=True)
class DenseNetConfig:
    block_layer_counts: tuple[int, ...] = (6, 12, 24, 16)
    growth_rate: int = 32
    initial_channels: int = 64
    num_classes: int = 25
    input_shape: tuple[int, int, int] = (224, 224, 3)
    compression: float = 0.5
    bottleneck_factor: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_layer_counts", tuple(self.block_layer_counts))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if not self.block_layer_counts or any(
            not isinstance(n, int) or n <= 0 for n in self.block_layer_counts
        ):
            raise ConfigError("block_layer_counts must be positive integers")
        if self.growth_rate <= 0:
            raise ConfigError("growth_rate must be positive")
        if self.initial_channels <= 0:
            raise ConfigError("initial_channels must be positive")
        if self.num_classes <= 0:
            raise ConfigError("num_classes must be positive")
        if not 0.0 < self.compression <= 1.0:
            raise ConfigError("compression must be in (0, 1]")
        if self.bottleneck_factor < 1:
            raise ConfigError("bottleneck_factor must be >= 1")
        if len(self.input_shape) != 3 or self.input_shape[2] != 3:
            raise ConfigError("input_shape must be (height, width, 3)")
        if self.input_shape[0] < 32 or self.input_shape[1] < 32:
            raise ConfigError("input must be at least 32x32 to survive 5 downsamplings")

    def to_dict(self) -> dict:
        return {
            "block_layer_counts": list(self.block_layer_counts),
            "growth_rate": self.growth_rate,
            "initial_channels": self.initial_channels,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
            "compression": self.compression,
            "bottleneck_factor": self.bottleneck_factor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNetConfig":
        return cls(
            block_layer_counts=tuple(int(n) for n in data["block_layer_counts"]),
            growth_rate=int(data["growth_rate"]),
            initial_channels=int(data["initial_channels"]),
            num_classes=int(data["num_classes"]),
            input_shape=tuple(int(v) for v in data["input_shape"]),
            compression=float(data["compression"]),
            bottleneck_factor=int(data["bottleneck_factor"]),
        )


def growth_rate_channels(initial_channels: int, growth_rate: int, layer_index: int) -> int:
    """Feature-map count at 1-based ``layer_index``:
    initial_channels + growth_rate * (layer_index - 1)."""
    if initial_channels <= 0 or growth_rate <= 0:
        raise DomainError("initial_channels and growth_rate must be positive")
    if layer_index < 1:
        raise DomainError(f"layer_index must be >= 1, got {layer_index}")
    return initial_channels + growth_rate * (layer_index - 1)


@dataclass(frozen=True)
class LayerPlan:
    name: str
    kind: str  # conv | maxpool | avgpool | global_avgpool | linear
    in_channels: int
    out_channels: int
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer plan with consistent channel arithmetic."""

    config: DenseNetConfig
    entries: tuple[LayerPlan, ...] = field(repr=False)

    @property
    def weighted_layer_count(self) -> int:
        """Number of weight-bearing layers (convolutions + linear)."""
        return sum(1 for e in self.entries if e.kind in ("conv", "linear"))

    @property
    def head_width(self) -> int:
        return self.entries[-1].out_channels

    @property
    def feature_channels(self) -> int:
        """Channels entering the classification head."""
        return self.entries[-1].in_channels

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "entries": [vars(e) | {} for e in self.entries],
        }


def build_model(cfg: DenseNetConfig) -> ModelSpec:
    """Derive the full layer plan for a configuration.

    Raises ConfigError if the configuration is inconsistent (delegated to
    DenseNetConfig validation).
    """
    entries: list[LayerPlan] = []
    bottleneck = cfg.bottleneck_factor * cfg.growth_rate

    entries.append(LayerPlan("conv0", "conv", 3, cfg.initial_channels, 7, 2, 3))
    entries.append(
        LayerPlan("pool0", "maxpool", cfg.initial_channels, cfg.initial_channels, 3, 2, 1)
    )
    channels = cfg.initial_channels
    last_block = len(cfg.block_layer_counts) - 1
    for b, layer_count in enumerate(cfg.block_layer_counts):
        for l in range(1, layer_count + 1):
            entries.append(
                LayerPlan(f"block{b + 1}.layer{l}.conv1", "conv", channels, bottleneck, 1)
            )
            entries.append(
                LayerPlan(
                    f"block{b + 1}.layer{l}.conv2",
                    "conv",
                    bottleneck,
                    cfg.growth_rate,
                    3,
                    1,
                    1,
                )
            )
            channels += cfg.growth_rate
        if b != last_block:
            compressed = max(1, int(channels * cfg.compression))
            entries.append(
                LayerPlan(f"transition{b + 1}.conv", "conv", channels, compressed, 1)
            )
            entries.append(
                LayerPlan(f"transition{b + 1}.pool", "avgpool", compressed, compressed, 2, 2)
            )
            channels = compressed
    entries.append(LayerPlan("global_pool", "global_avgpool", channels, channels))
    entries.append(LayerPlan("classifier", "linear", channels, cfg.num_classes))
    return ModelSpec(config=cfg, entries=tuple(entries))


def _concat_channels(inputs: Sequence[np.ndarray]) -> np.ndarray:
    first = inputs[0]
    for arr in inputs[1:]:
        if arr.shape[0] != first.shape[0] or arr.shape[2:] != first.shape[2:]:
            raise ShapeMismatch(
                f"cannot concatenate feature maps {first.shape} and {arr.shape}"
            )
    return np.concatenate(inputs, axis=1) if len(inputs) > 1 else first


class DenseLayer(Module):
    """Composite layer: BN -> ReLU -> 1x1 conv -> BN -> ReLU -> 3x3 conv."""

    def __init__(self, in_channels: int, growth_rate: int, bottleneck_factor: int, rng, dtype):
        super().__init__()
        mid = bottleneck_factor * growth_rate
        self.bn1 = self.add_child("bn1", BatchNorm2d(in_channels, dtype=dtype))
        self.relu1 = self.add_child("relu1", ReLU())
        self.conv1 = self.add_child("conv1", Conv2d(in_channels, mid, 1, rng=rng, dtype=dtype))
        self.bn2 = self.add_child("bn2", BatchNorm2d(mid, dtype=dtype))
        self.relu2 = self.add_child("relu2", ReLU())
        self.conv2 = self.add_child(
            "conv2", Conv2d(mid, growth_rate, 3, padding=1, rng=rng, dtype=dtype)
        )

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        out = self.bn1.forward(x, training)
        out = self.relu1.forward(out, training)
        out = self.conv1.forward(out, training)
        out = self.bn2.forward(out, training)
        out = self.relu2.forward(out, training)
        return self.conv2.forward(out, training)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.conv2.backward(dy)
        d = self.relu2.backward(d)
        d = self.bn2.backward(d)
        d = self.conv1.backward(d)
        d = self.relu1.backward(d)
        return self.bn1.backward(d)


def dense_layer_forward(
    layer: DenseLayer, inputs: Sequence[np.ndarray], training: bool = False
) -> np.ndarray:
    """Apply a composite layer to the concatenation of all prior feature maps.

    This is the densely connected update: the new feature map is computed
    from every preceding map, not just the latest one. All inputs must
    share batch and spatial dimensions.
    """
    if not inputs:
        raise ShapeMismatch("dense_layer_forward requires at least one input")
    return layer.forward(_concat_channels(list(inputs)), training)


def plain_chain_forward(
    layer: DenseLayer, last_input: np.ndarray, training: bool = False
) -> np.ndarray:
    """Reference implementation of the plain sequential update, where a
    layer sees only its immediate predecessor's output.

    Kept for contrast tests: with a single prior feature map,
    dense_layer_forward degenerates to exactly this.
    """
    return layer.forward(last_input, training)


class DenseBlock(Module):
    def __init__(self, in_channels: int, layer_count: int, growth_rate: int,
                 bottleneck_factor: int, rng, dtype):
        super().__init__()
        self.in_channels = in_channels
        self.growth_rate = growth_rate
        self.layers: list[DenseLayer] = []
        channels = in_channels
        for l in range(1, layer_count + 1):
            layer = DenseLayer(channels, growth_rate, bottleneck_factor, rng, dtype)
            self.add_child(f"layer{l}", layer)
            self.layers.append(layer)
            channels += growth_rate
        self.out_channels = channels
        self._feature_sizes: list[int] | None = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        features = [x]
        for layer in self.layers:
            new = layer.forward(_concat_channels(features), training)
            features.append(new)
        if training:
            self._feature_sizes = [f.shape[1] for f in features]
        return _concat_channels(features)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        sizes = self._feature_sizes
        bounds = np.cumsum([0] + sizes)
        grads = [
            np.ascontiguousarray(dy[:, bounds[i] : bounds[i + 1]])
            for i in range(len(sizes))
        ]
        for l in range(len(self.layers) - 1, -1, -1):
            dinp = self.layers[l].backward(grads[l + 1])
            for i in range(l + 1):
                grads[i] = grads[i] + dinp[:, bounds[i] : bounds[i + 1]]
        return grads[0]


class Transition(Module):
    """BN -> ReLU -> 1x1 compressing conv -> 2x2 average pool."""

    def __init__(self, in_channels: int, compression: float, rng, dtype):
        super().__init__()
        self.out_channels = max(1, int(in_channels * compression))
        self.bn = self.add_child("bn", BatchNorm2d(in_channels, dtype=dtype))
        self.relu = self.add_child("relu", ReLU())
        self.conv = self.add_child(
            "conv", Conv2d(in_channels, self.out_channels, 1, rng=rng, dtype=dtype)
        )
        self.pool = self.add_child("pool", AvgPool2d(2))

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        out = self.bn.forward(x, training)
        out = self.relu.forward(out, training)
        out = self.conv.forward(out, training)
        return self.pool.forward(out, training)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.pool.backward(dy)
        d = self.conv.backward(d)
        d = self.relu.backward(d)
        return self.bn.backward(d)


class DenseNetNetwork(Module):
    """Full classifier network; forward yields pre-softmax scores."""

    def __init__(self, cfg: DenseNetConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        rng = rng or np.random.default_rng(0)
        self.conv0 = self.add_child(
            "conv0", Conv2d(3, cfg.initial_channels, 7, 2, 3, rng=rng, dtype=dtype)
        )
        self.bn0 = self.add_child("bn0", BatchNorm2d(cfg.initial_channels, dtype=dtype))
        self.relu0 = self.add_child("relu0", ReLU())
        self.pool0 = self.add_child("pool0", MaxPool2d(3, 2, 1))

        self.blocks: list[DenseBlock] = []
        self.transitions: list[Transition] = []
        channels = cfg.initial_channels
        last = len(cfg.block_layer_counts) - 1
        for b, layer_count in enumerate(cfg.block_layer_counts):
            block = DenseBlock(
                channels, layer_count, cfg.growth_rate, cfg.bottleneck_factor, rng, dtype
            )
            self.add_child(f"block{b + 1}", block)
            self.blocks.append(block)
            channels = block.out_channels
            if b != last:
                transition = Transition(channels, cfg.compression, rng, dtype)
                self.add_child(f"transition{b + 1}", transition)
                self.transitions.append(transition)
                channels = transition.out_channels

        self.feature_channels = channels
        self.bn_final = self.add_child("bn_final", BatchNorm2d(channels, dtype=dtype))
        self.relu_final = self.add_child("relu_final", ReLU())
        self.global_pool = self.add_child("global_pool", GlobalAvgPool())
        self.classifier = self.add_child(
            "classifier", Linear(channels, cfg.num_classes, rng=rng, dtype=dtype)
        )

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"expected (N, 3, H, W) input, got {x.shape}")
        out = self.conv0.forward(x, training)
        out = self.bn0.forward(out, training)
        out = self.relu0.forward(out, training)
        out = self.pool0.forward(out, training)
        for b, block in enumerate(self.blocks):
            out = block.forward(out, training)
            if b < len(self.transitions):
                out = self.transitions[b].forward(out, training)
        out = self.bn_final.forward(out, training)
        out = self.relu_final.forward(out, training)
        out = self.global_pool.forward(out, training)
        return self.classifier.forward(out, training)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        d = self.classifier.backward(dlogits)
        d = self.global_pool.backward(d)
        d = self.relu_final.backward(d)
        d = self.bn_final.backward(d)
        for b in range(len(self.blocks) - 1, -1, -1):
            if b < len(self.transitions):
                d = self.transitions[b].backward(d)
            d = self.blocks[b].backward(d)
        d = self.pool0.backward(d)
        d = self.relu0.backward(d)
        d = self.bn0.backward(d)
        return self.conv0.backward(d)

    def count_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())
