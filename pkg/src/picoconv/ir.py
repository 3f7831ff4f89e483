"""Network description, shape inference and parameter/operation accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

OPS_CONVENTION = (
    "2 ops per multiply-accumulate (Conv1d, Linear); BatchNorm1d 2 ops/element; "
    "ReLU 1 op/element; GAP 1 op/input element"
)


class ShapeError(ValueError):
    """Raised when a layer cannot consume the shape produced by its predecessor."""


@dataclass(frozen=True)
class Conv1d:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    pad_left: int = 0
    pad_right: int = 0
    groups: int = 1
    kind = "Conv1d"

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_size", "stride", "groups"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"Conv1d.{name} must be >= 1, got {getattr(self, name)}")
        if self.pad_left < 0 or self.pad_right < 0:
            raise ValueError("Conv1d pads must be >= 0")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )

    @property
    def fan_in(self) -> int:
        """Multiplies per output element (C_in/g * K)."""
        return self.in_channels // self.groups * self.kernel_size


@dataclass(frozen=True)
class BatchNorm1d:
    channels: int
    kind = "BatchNorm1d"


@dataclass(frozen=True)
class ReLU:
    channels: int
    kind = "ReLU"


@dataclass(frozen=True)
class GAP:
    channels: int
    kind = "GAP"


@dataclass(frozen=True)
class Linear:
    in_features: int
    out_features: int
    kind = "Linear"

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise ValueError("Linear features must be >= 1")

    @property
    def fan_in(self) -> int:
        return self.in_features


LayerSpec = Union[Conv1d, BatchNorm1d, ReLU, GAP, Linear]
LAYER_KINDS = {cls.kind: cls for cls in (Conv1d, BatchNorm1d, ReLU, GAP, Linear)}


def output_shape(layer: LayerSpec, in_shape: tuple[int, int], index: int | None = None) -> tuple[int, int]:
    """Shape (channels, length) produced by ``layer`` from ``in_shape``."""
    channels, length = in_shape
    where = f"layer {index} ({layer.kind})" if index is not None else layer.kind
    if isinstance(layer, Conv1d):
        if channels != layer.in_channels:
            raise ShapeError(f"{where}: expected {layer.in_channels} input channels, got {channels}")
        padded = length + layer.pad_left + layer.pad_right
        if padded < layer.kernel_size:
            raise ShapeError(f"{where}: padded length {padded} < kernel_size {layer.kernel_size}")
        return layer.out_channels, (padded - layer.kernel_size) // layer.stride + 1
    if isinstance(layer, Linear):
        if channels * length != layer.in_features:
            raise ShapeError(
                f"{where}: expected {layer.in_features} input features, got {channels}x{length}"
            )
        return layer.out_features, 1
    if channels != layer.channels:
        raise ShapeError(f"{where}: expected {layer.channels} channels, got {channels}")
    if isinstance(layer, GAP):
        if length < 1:
            raise ShapeError(f"{where}: empty input")
        return channels, 1
    return channels, length


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple
    input_channels: int
    input_length: int
    name: str = "custom"
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        shape = (self.input_channels, self.input_length)
        shapes = [shape]
        for i, layer in enumerate(self.layers):
            shape = output_shape(layer, shape, i)
            shapes.append(shape)
        object.__setattr__(self, "shapes", tuple(shapes))

    def in_shape(self, index: int) -> tuple[int, int]:
        return self.shapes[index]

    def out_shape(self, index: int) -> tuple[int, int]:
        return self.shapes[index + 1]

    def conv_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, Conv1d)]

    def bn_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, BatchNorm1d)]

    def linear_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, Linear)]


@dataclass(frozen=True)
class Block:
    """A group of layers executed by one PE pass: conv/linear, optional BN, optional ReLU.

    GAP blocks carry only ``main``.
    """

    main: int
    bn: int | None = None
    relu: int | None = None

    @property
    def last(self) -> int:
        return max(i for i in (self.main, self.bn, self.relu) if i is not None)


def blocks(net: NetworkConfig) -> list[Block]:
    """Fuse each conv/linear with the BN and ReLU directly following it."""
    out = []
    layers = net.layers
    i = 0
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, (Conv1d, Linear)):
            bn = relu = None
            j = i + 1
            if j < len(layers) and isinstance(layers[j], BatchNorm1d):
                bn, j = j, j + 1
            if j < len(layers) and isinstance(layers[j], ReLU):
                relu, j = j, j + 1
            out.append(Block(i, bn, relu))
            i = j
        elif isinstance(layer, GAP):
            out.append(Block(i))
            i += 1
        else:
            raise ShapeError(f"layer {i} ({layer.kind}) is not preceded by a conv or linear layer")
    return out


# -- presets -----------------------------------------------------------------

SALENET_CHANNELS = (5, 64, 64, 64, 128)
SALENET_GROUPS = (1, 8, 8, 16)
SALENET_INPUT_LENGTH = 1254
KERNEL_SIZE = 16
N_CLASSES = 2


def _conv_stack(groups: Sequence[int]) -> list:
    layers = []
    for i, g in enumerate(groups):
        cin, cout = SALENET_CHANNELS[i], SALENET_CHANNELS[i + 1]
        if i < 3:
            conv = Conv1d(cin, cout, KERNEL_SIZE, stride=1, pad_left=8, pad_right=7, groups=g)
        else:
            conv = Conv1d(cin, cout, KERNEL_SIZE, stride=2, pad_left=8, pad_right=8, groups=g)
        layers += [conv, BatchNorm1d(cout), ReLU(cout)]
    return layers


def _build(name: str, grouped: bool, gap: bool) -> NetworkConfig:
    groups = SALENET_GROUPS if grouped else (1, 1, 1, 1)
    layers = _conv_stack(groups)
    c_last = SALENET_CHANNELS[-1]
    if gap:
        layers += [GAP(c_last), Linear(c_last, N_CLASSES)]
    else:
        # flatten-then-linear head over the last conv map
        last_len = NetworkConfig(tuple(layers), SALENET_CHANNELS[0], SALENET_INPUT_LENGTH).shapes[-1][1]
        layers += [Linear(c_last * last_len, N_CLASSES)]
    return NetworkConfig(tuple(layers), SALENET_CHANNELS[0], SALENET_INPUT_LENGTH, name=name)


PRESETS = {
    "salenet": lambda: _build("salenet", grouped=True, gap=True),
    "baseline": lambda: _build("baseline", grouped=False, gap=False),
    "baseline_gap": lambda: _build("baseline_gap", grouped=False, gap=True),
    "baseline_group": lambda: _build("baseline_group", grouped=True, gap=False),
}


def preset(name: str) -> NetworkConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- accounting ----------------------------------------------------------------

@dataclass(frozen=True)
class CountReport:
    per_layer: tuple
    kinds: tuple
    convention: str = ""

    @property
    def total(self) -> int:
        return sum(self.per_layer)

    def by_kind(self, kind: str) -> int:
        return sum(n for n, k in zip(self.per_layer, self.kinds) if k == kind)

    def to_dict(self) -> dict:
        return {
            "per_layer": list(self.per_layer),
            "kinds": list(self.kinds),
            "total": self.total,
            "convention": self.convention,
        }


def param_shapes(net: NetworkConfig) -> Iterator[tuple[int, str, tuple[int, ...]]]:
    """Yield (layer index, tensor name, dims) for every stored tensor.

    BN running statistics are included here (they are stored) but are not
    learnable parameters; see :func:`count_params`.
    """
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv1d):
            yield i, "weight", (layer.out_channels, layer.in_channels // layer.groups, layer.kernel_size)
            yield i, "bias", (layer.out_channels,)
        elif isinstance(layer, BatchNorm1d):
            for name in ("gamma", "beta", "mean", "var"):
                yield i, name, (layer.channels,)
        elif isinstance(layer, Linear):
            yield i, "weight", (layer.out_features, layer.in_features)
            yield i, "bias", (layer.out_features,)


RUNNING_STATS = ("mean", "var")


def count_params(net: NetworkConfig) -> CountReport:
    per_layer = []
    for layer in net.layers:
        if isinstance(layer, Conv1d):
            n = layer.kernel_size * (layer.in_channels // layer.groups) * layer.out_channels + layer.out_channels
        elif isinstance(layer, BatchNorm1d):
            n = 2 * layer.channels
        elif isinstance(layer, Linear):
            n = layer.in_features * layer.out_features + layer.out_features
        else:
            n = 0
        per_layer.append(n)
    return CountReport(tuple(per_layer), tuple(l.kind for l in net.layers), "BN running statistics excluded")


def count_ops(net: NetworkConfig) -> CountReport:
    per_layer = []
    for i, layer in enumerate(net.layers):
        cin, lin = net.in_shape(i)
        cout, lout = net.out_shape(i)
        if isinstance(layer, Conv1d):
            n = 2 * cout * lout * layer.fan_in
        elif isinstance(layer, Linear):
            n = 2 * layer.in_features * layer.out_features
        elif isinstance(layer, BatchNorm1d):
            n = 2 * cin * lin
        else:
            # ReLU: one compare per element; GAP: one add per input element
            n = cin * lin
        per_layer.append(n)
    return CountReport(tuple(per_layer), tuple(l.kind for l in net.layers), OPS_CONVENTION)


def conv_param_fraction(net: NetworkConfig) -> tuple[float, float]:
    """Share of parameters and operations spent in Conv1d layers."""
    params, ops = count_params(net), count_ops(net)
    p = params.by_kind("Conv1d") / params.total if params.total else 0.0
    o = ops.by_kind("Conv1d") / ops.total if ops.total else 0.0
    return p, o


def dense_baseline(net: NetworkConfig) -> NetworkConfig:
    """``net`` with every conv ungrouped and GAP + linear replaced by a
    flatten-then-linear head; the reference point for architectural savings."""
    layers = []
    for layer in net.layers:
        if isinstance(layer, Conv1d):
            layer = Conv1d(layer.in_channels, layer.out_channels, layer.kernel_size, layer.stride,
                           layer.pad_left, layer.pad_right, 1)
        layers.append(layer)
    out = []
    i = 0
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, GAP) and i + 1 < len(layers) and isinstance(layers[i + 1], Linear):
            c, length = net.in_shape(i)
            out.append(Linear(c * length, layers[i + 1].out_features))
            i += 2
            continue
        out.append(layer)
        i += 1
    name = "baseline" if net.name == "salenet" else f"{net.name}_dense"
    return NetworkConfig(tuple(out), net.input_channels, net.input_length, name=name)
