"""Network architecture descriptors and parameter layout.

An architecture is a plain description (no weights attached): an input
image shape plus an ordered list of layer descriptors. All parameters of
a model live in one flat vector; this module defines how that vector is
laid out (per layer: weights first, then biases, in declaration order)
and how shapes chain from one layer to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

VALID_ACTIVATIONS = ("relu", "none")
VALID_PADDINGS = ("same", "valid")


class ArchitectureError(ValueError):
    """Raised when a layer stack does not chain into a valid network."""


@dataclass(frozen=True)
class Conv2D:
    """2-d convolution, stride 1. Kernel is (height, width)."""

    out_channels: int
    kernel: tuple[int, int] = (5, 5)
    activation: str = "relu"
    padding: str = "same"

    def __post_init__(self):
        if self.out_channels < 1:
            raise ArchitectureError(f"conv out_channels must be >= 1, got {self.out_channels}")
        if len(self.kernel) != 2 or any(k < 1 for k in self.kernel):
            raise ArchitectureError(f"bad conv kernel {self.kernel}")
        if self.activation not in VALID_ACTIVATIONS:
            raise ArchitectureError(f"unknown activation {self.activation!r}")
        if self.padding not in VALID_PADDINGS:
            raise ArchitectureError(f"unknown padding {self.padding!r}")


@dataclass(frozen=True)
class MaxPool:
    """2x2 max pooling, stride 2. Odd trailing rows/columns are dropped."""


@dataclass(frozen=True)
class Dense:
    """Fully connected layer. A 3-d input is flattened first."""

    units: int
    activation: str = "none"

    def __post_init__(self):
        if self.units < 1:
            raise ArchitectureError(f"dense units must be >= 1, got {self.units}")
        if self.activation not in VALID_ACTIVATIONS:
            raise ArchitectureError(f"unknown activation {self.activation!r}")


Layer = Union[Conv2D, MaxPool, Dense]

# Shape of the data flowing between layers: (H, W, C) or a flat width.
FeatureShape = Union[tuple[int, int, int], int]


@dataclass(frozen=True)
class ArchSpec:
    """Input shape (height, width, channels) plus an ordered layer stack.

    The final layer must be a Dense layer; its unit count is the number
    of classes fed to the softmax.
    """

    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3 or any(s < 1 for s in self.input_shape):
            raise ArchitectureError(f"bad input shape {self.input_shape}")
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ArchitectureError("architecture must end with a Dense layer")
        feature_shapes(self)  # shape-chain validation

    @property
    def num_classes(self) -> int:
        return self.layers[-1].units


def feature_shapes(arch: ArchSpec) -> list[FeatureShape]:
    """Output shape after each layer, validating the chain along the way."""
    shapes: list[FeatureShape] = []
    cur: FeatureShape = tuple(arch.input_shape)
    for idx, layer in enumerate(arch.layers):
        if isinstance(layer, Conv2D):
            if not isinstance(cur, tuple):
                raise ArchitectureError(f"layer {idx}: conv needs a 3-d input, got flat {cur}")
            h, w, _ = cur
            kh, kw = layer.kernel
            if layer.padding == "valid":
                oh, ow = h - kh + 1, w - kw + 1
            else:
                oh, ow = h, w
            if oh < 1 or ow < 1:
                raise ArchitectureError(f"layer {idx}: kernel {layer.kernel} too large for input {cur}")
            cur = (oh, ow, layer.out_channels)
        elif isinstance(layer, MaxPool):
            if not isinstance(cur, tuple):
                raise ArchitectureError(f"layer {idx}: pool needs a 3-d input, got flat {cur}")
            h, w, c = cur
            if h < 2 or w < 2:
                raise ArchitectureError(f"layer {idx}: input {cur} too small for 2x2 pooling")
            cur = (h // 2, w // 2, c)
        elif isinstance(layer, Dense):
            cur = layer.units
        else:
            raise ArchitectureError(f"layer {idx}: unknown layer type {type(layer).__name__}")
        shapes.append(cur)
    return shapes


def _dense_fan_in(shape: FeatureShape) -> int:
    return int(np.prod(shape)) if isinstance(shape, tuple) else shape


def param_shapes(arch: ArchSpec) -> list[tuple[tuple[int, ...], tuple[int, ...]] | None]:
    """(weight shape, bias shape) per layer; None for parameter-free layers.

    Conv weights are (kh, kw, in_channels, out_channels); dense weights
    are (fan_in, units).
    """
    shapes = feature_shapes(arch)
    inputs = [tuple(arch.input_shape)] + shapes[:-1]
    out: list[tuple[tuple[int, ...], tuple[int, ...]] | None] = []
    for layer, inp in zip(arch.layers, inputs):
        if isinstance(layer, Conv2D):
            kh, kw = layer.kernel
            in_c = inp[2]
            out.append(((kh, kw, in_c, layer.out_channels), (layer.out_channels,)))
        elif isinstance(layer, Dense):
            out.append(((_dense_fan_in(inp), layer.units), (layer.units,)))
        else:
            out.append(None)
    return out


def param_count(arch: ArchSpec) -> int:
    """Total number of parameters (weights plus biases) in the network."""
    total = 0
    for entry in param_shapes(arch):
        if entry is not None:
            w_shape, b_shape = entry
            total += int(np.prod(w_shape)) + int(np.prod(b_shape))
    return total


@dataclass(frozen=True)
class ParamSlot:
    """Position of one layer's weight and bias blocks in the flat vector."""

    layer_index: int
    w_offset: int
    w_shape: tuple[int, ...]
    b_offset: int
    b_shape: tuple[int, ...]

    def weight_view(self, flat: np.ndarray) -> np.ndarray:
        n = int(np.prod(self.w_shape))
        return flat[self.w_offset : self.w_offset + n].reshape(self.w_shape)

    def bias_view(self, flat: np.ndarray) -> np.ndarray:
        n = int(np.prod(self.b_shape))
        return flat[self.b_offset : self.b_offset + n].reshape(self.b_shape)


def param_layout(arch: ArchSpec) -> list[ParamSlot]:
    slots = []
    offset = 0
    for idx, entry in enumerate(param_shapes(arch)):
        if entry is None:
            continue
        w_shape, b_shape = entry
        w_n = int(np.prod(w_shape))
        b_n = int(np.prod(b_shape))
        slots.append(ParamSlot(idx, offset, w_shape, offset + w_n, b_shape))
        offset += w_n + b_n
    return slots


def init_weights(arch: ArchSpec, seed, dtype=np.float32) -> np.ndarray:
    """Fresh flat weight vector: per layer uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.

    The fan-in of a conv layer is kh*kw*in_channels; of a dense layer its
    flattened input width. This same scheme supplies the "random models"
    used when sizing the unlearning ball radius.
    """
    rng = np.random.default_rng(seed)
    flat = np.zeros(param_count(arch), dtype=dtype)
    for slot in param_layout(arch):
        w_shape = slot.w_shape
        fan_in = int(np.prod(w_shape[:-1]))
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=w_shape)
        slot.weight_view(flat)[...] = w.astype(dtype)
    return flat


def paper_cnn(input_shape: tuple[int, int, int] = (28, 28, 1), num_classes: int = 10) -> ArchSpec:
    """The reference CNN: two 5x5 convs (32 then 64 channels, each followed
    by 2x2 max pooling), a 512-unit ReLU dense layer, and the class logits.

    Same padding on the convs reproduces the documented 1,663,370-parameter
    total on 28x28x1 input. ReLU after each conv is assumed; only the
    512-unit layer's activation is pinned down by the source description.
    """
    return ArchSpec(
        input_shape=input_shape,
        layers=(
            Conv2D(32, (5, 5), activation="relu", padding="same"),
            MaxPool(),
            Conv2D(64, (5, 5), activation="relu", padding="same"),
            MaxPool(),
            Dense(512, activation="relu"),
            Dense(num_classes, activation="none"),
        ),
    )


def mlp(input_shape: tuple[int, int, int], hidden_units: int = 64, num_classes: int = 10) -> ArchSpec:
    """Two-layer perceptron: flatten -> Dense(hidden, relu) -> Dense(classes)."""
    return ArchSpec(
        input_shape=input_shape,
        layers=(Dense(hidden_units, activation="relu"), Dense(num_classes, activation="none")),
    )


def arch_to_dict(arch: ArchSpec) -> dict:
    layers = []
    for layer in arch.layers:
        if isinstance(layer, Conv2D):
            layers.append(
                {
                    "type": "conv2d",
                    "out_channels": layer.out_channels,
                    "kernel": list(layer.kernel),
                    "activation": layer.activation,
                    "padding": layer.padding,
                }
            )
        elif isinstance(layer, MaxPool):
            layers.append({"type": "maxpool"})
        else:
            layers.append({"type": "dense", "units": layer.units, "activation": layer.activation})
    return {"input_shape": list(arch.input_shape), "layers": layers}


def arch_from_dict(data: dict) -> ArchSpec:
    layers: list[Layer] = []
    for entry in data["layers"]:
        kind = entry["type"]
        if kind == "conv2d":
            layers.append(
                Conv2D(
                    entry["out_channels"],
                    tuple(entry["kernel"]),
                    activation=entry["activation"],
                    padding=entry["padding"],
                )
            )
        elif kind == "maxpool":
            layers.append(MaxPool())
        elif kind == "dense":
            layers.append(Dense(entry["units"], activation=entry["activation"]))
        else:
            raise ArchitectureError(f"unknown layer type {kind!r} in serialized architecture")
    return ArchSpec(input_shape=tuple(data["input_shape"]), layers=tuple(layers))
