"""Declarative sequential CNN architectures.

A network is described as data (an ordered list of layer specs) so that
shape propagation, parameter counting, and receptive-field analysis can
run without instantiating any weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Optional

# Published theoretical receptive-field ceilings for two common reference
# backbones at their standard configurations.  Recorded for comparison in
# reports; not recomputed here (both are non-sequential graphs).
RESNET101_MAX_RF = 971
INCEPTIONV3_MAX_RF = 1311

LAYER_KINDS = ("conv", "batchnorm", "maxpool", "flatten", "dense", "dropout", "relu")

# which optional fields each kind is allowed (and required) to carry
_FIELDS_BY_KIND = {
    "conv": ("kernel_size", "stride", "padding", "filters"),
    "batchnorm": (),
    "maxpool": ("pool_size", "stride"),
    "flatten": (),
    "dense": ("width",),
    "dropout": ("rate",),
    "relu": (),
}


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel_size: Optional[int] = None
    stride: Optional[int] = None
    padding: Optional[int] = None
    filters: Optional[int] = None
    pool_size: Optional[int] = None
    width: Optional[int] = None
    rate: Optional[float] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        allowed = _FIELDS_BY_KIND[self.kind]
        for f in fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            if f.name in allowed:
                if value is None:
                    raise ArchitectureError(f"{self.kind} layer requires {f.name}")
            elif value is not None:
                raise ArchitectureError(
                    f"{self.kind} layer does not take {f.name}"
                )
        for name in ("kernel_size", "stride", "pool_size", "filters", "width"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ArchitectureError(f"{name} must be >= 1, got {value}")
        if self.padding is not None and self.padding < 0:
            raise ArchitectureError(f"padding must be >= 0, got {self.padding}")
        if self.rate is not None and not 0.0 <= self.rate < 1.0:
            raise ArchitectureError(f"dropout rate must be in [0, 1), got {self.rate}")


def conv(kernel_size, filters, stride=1, padding=0):
    return LayerSpec("conv", kernel_size=kernel_size, stride=stride,
                     padding=padding, filters=filters)


def batchnorm():
    return LayerSpec("batchnorm")


def maxpool(pool_size, stride):
    return LayerSpec("maxpool", pool_size=pool_size, stride=stride)


def flatten():
    return LayerSpec("flatten")


def dense_layer(width):
    return LayerSpec("dense", width=width)


def dropout_layer(rate):
    return LayerSpec("dropout", rate=rate)


def relu_layer():
    return LayerSpec("relu")


@dataclass(frozen=True)
class ArchitectureSpec:
    """An ordered sequential network over (channels, height, width) inputs.

    Validated on construction: shape propagation must succeed end to end
    and the layer ordering must be sequential-classifier shaped (at most
    one flatten, spatial layers only before it, dense only after it).
    """

    name: str
    input_shape: tuple  # (channels, height, width)
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3:
            raise ArchitectureError(
                f"input_shape must be (channels, height, width), got {self.input_shape}"
            )
        if any(d < 1 for d in self.input_shape):
            raise ArchitectureError(f"input dimensions must be >= 1: {self.input_shape}")
        output_shape(self)  # raises on any structural or size problem


@dataclass(frozen=True)
class ReceptiveFieldRow:
    index: int
    kind: str
    rf: int
    jump: int
    start: float


def output_shape(spec: ArchitectureSpec) -> list:
    """Per-layer output shapes; entry i is the shape after layers[i].

    Spatial shapes are (channels, height, width); flattened shapes are
    (features,).  Raises ArchitectureError naming the failing layer index
    when a kernel or pool no longer fits.
    """
    shapes = []
    shape = tuple(spec.input_shape)
    seen_flatten = False
    for i, layer in enumerate(spec.layers):
        if layer.kind in ("conv", "maxpool", "batchnorm") and seen_flatten:
            raise ArchitectureError(
                f"layer {i}: {layer.kind} is not allowed after flatten"
            )
        if layer.kind == "conv":
            c, h, w = shape
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            if h + 2 * p < k or w + 2 * p < k:
                raise ArchitectureError(
                    f"layer {i}: {k}x{k} kernel does not fit input {h}x{w} with padding {p}"
                )
            shape = (layer.filters, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
        elif layer.kind == "maxpool":
            c, h, w = shape
            k, s = layer.pool_size, layer.stride
            if h < k or w < k:
                raise ArchitectureError(
                    f"layer {i}: {k}x{k} pool window exceeds input {h}x{w}"
                )
            shape = (c, (h - k) // s + 1, (w - k) // s + 1)
        elif layer.kind == "flatten":
            if seen_flatten:
                raise ArchitectureError(f"layer {i}: second flatten")
            seen_flatten = True
            c, h, w = shape
            shape = (c * h * w,)
        elif layer.kind == "dense":
            if not seen_flatten:
                raise ArchitectureError(f"layer {i}: dense requires a flatten before it")
            shape = (layer.width,)
        # batchnorm / relu / dropout leave the shape unchanged
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class ParamCount:
    trainable: int
    buffers: int


def param_count(spec: ArchitectureSpec) -> ParamCount:
    """Trainable parameter count, with non-trainable buffers reported separately."""
    trainable = 0
    buffers = 0
    shape = tuple(spec.input_shape)
    for layer, out in zip(spec.layers, output_shape(spec)):
        if layer.kind == "conv":
            in_c = shape[0]
            trainable += layer.kernel_size ** 2 * in_c * layer.filters + layer.filters
        elif layer.kind == "batchnorm":
            channels = shape[0]
            trainable += 2 * channels
            buffers += 2 * channels  # running mean/var
        elif layer.kind == "dense":
            trainable += shape[0] * layer.width + layer.width
        shape = out
    return ParamCount(trainable, buffers)


def receptive_field(spec: ArchitectureSpec) -> list:
    """Per-layer receptive-field table for a sequential spec.

    rf grows as r <- r + (k-1)*j and jump as j <- j*s through conv/pool
    layers; start tracks the input-coordinate center of output unit 0
    (pixel centers at integer coordinates).  Flatten and dense rows cover
    the full input; when the running rf already exceeds the input extent
    the larger value is kept so rf stays non-decreasing.
    """
    rows = []
    rf = 1
    jump = 1
    start = Fraction(0)
    extent = max(spec.input_shape[1], spec.input_shape[2])
    for i, layer in enumerate(spec.layers):
        if layer.kind in ("conv", "maxpool"):
            k = layer.kernel_size if layer.kind == "conv" else layer.pool_size
            s = layer.stride
            p = layer.padding if layer.kind == "conv" else 0
            rf = rf + (k - 1) * jump
            start = start + (Fraction(k - 1, 2) - p) * jump
            jump = jump * s
        elif layer.kind in ("flatten", "dense"):
            rf = max(rf, extent)
            start = Fraction(extent - 1, 2)
        rows.append(ReceptiveFieldRow(i, layer.kind, rf, jump, float(start)))
    return rows


def build_logisticnet(
    num_classes: int = 2,
    input_resolution: int = 227,
    conv_filters: tuple = (64, 96, 256, 384, 384, 256),
    conv_strides: tuple = (1, 4, 1, 1, 1, 1),
    dense_width: int = 4096,
    name: str = "logisticnet",
) -> ArchitectureSpec:
    """The six-conv sequential classifier with a 3x3 stem ahead of the
    11x11 layer, three 3x3 pool stages, and a two-layer 4096-wide head.

    Filter counts and strides default to the classic large-image values
    and may be overridden (e.g. narrower nets for small inputs).
    """
    if num_classes < 2:
        raise ArchitectureError(f"num_classes must be >= 2, got {num_classes}")
    if len(conv_filters) != 6 or len(conv_strides) != 6:
        raise ArchitectureError("expected 6 conv filter counts and 6 strides")
    f = conv_filters
    s = conv_strides
    layers = [
        conv(3, f[0], stride=s[0], padding=1),
        relu_layer(),
        conv(11, f[1], stride=s[1], padding=0),
        relu_layer(),
        batchnorm(),
        maxpool(3, 2),
        conv(5, f[2], stride=s[2], padding=2),
        relu_layer(),
        batchnorm(),
        maxpool(3, 2),
        conv(3, f[3], stride=s[3], padding=1),
        relu_layer(),
        batchnorm(),
        conv(3, f[4], stride=s[4], padding=1),
        relu_layer(),
        batchnorm(),
        conv(3, f[5], stride=s[5], padding=1),
        relu_layer(),
        batchnorm(),
        maxpool(3, 2),
        flatten(),
        dense_layer(dense_width),
        relu_layer(),
        dropout_layer(0.5),
        dense_layer(dense_width),
        relu_layer(),
        dropout_layer(0.5),
        dense_layer(num_classes),
    ]
    return ArchitectureSpec(name, (3, input_resolution, input_resolution), layers)


def build_logisticnet_small(num_classes: int = 2, input_resolution: int = 64) -> ArchitectureSpec:
    """Width-reduced variant sized for small inputs (default 64x64).

    Keeps the exact layer sequence; shrinks filters, the 11x11 stride
    (4 would starve the later pools at this resolution), and the head.
    """
    return build_logisticnet(
        num_classes=num_classes,
        input_resolution=input_resolution,
        conv_filters=(8, 16, 32, 48, 48, 32),
        conv_strides=(1, 2, 1, 1, 1, 1),
        dense_width=256,
        name="logisticnet-small",
    )


def spec_to_dict(spec: ArchitectureSpec) -> dict:
    layers = []
    for layer in spec.layers:
        entry = {"kind": layer.kind}
        for f in fields(layer):
            if f.name == "kind":
                continue
            value = getattr(layer, f.name)
            if value is not None:
                entry[f.name] = value
        layers.append(entry)
    return {"name": spec.name, "input_shape": list(spec.input_shape), "layers": layers}


def spec_from_dict(data: dict) -> ArchitectureSpec:
    try:
        layers = [LayerSpec(**entry) for entry in data["layers"]]
        return ArchitectureSpec(data["name"], tuple(data["input_shape"]), layers)
    except (KeyError, TypeError) as exc:
        raise ArchitectureError(f"malformed architecture description: {exc}") from exc


def spec_to_json(spec: ArchitectureSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


def spec_from_json(text: str) -> ArchitectureSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchitectureError(f"invalid architecture JSON: {exc}") from exc
    return spec_from_dict(data)
