"""Floating-point reference inference for 1-D CNNs described by :class:`NetworkConfig`.

This engine is the oracle for every compression pass and for the fixed-point
emulator, so it favours plain, deterministic numpy over speed tricks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ir import BatchNorm1d, Conv1d, GAP, Linear, NetworkConfig, ReLU, ShapeError, param_shapes

BN_EPS = 1e-5


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ModelParams:
    """Named float tensors for every layer of ``net``.

    Tensors are keyed ``"<layer index>.<name>"`` (``weight``, ``bias``,
    ``gamma``, ``beta``, ``mean``, ``var``).  ``masks`` holds a boolean keep-mask
    per conv layer (True = weight retained) and ``alive`` a per-output-channel
    flag per conv layer.  All arrays are read-only; passes build new instances.
    """

    net: NetworkConfig
    tensors: dict
    masks: dict = field(default_factory=dict)
    alive: dict = field(default_factory=dict)

    def __post_init__(self):
        tensors = {k: _frozen(v) for k, v in self.tensors.items()}
        for i, name, dims in param_shapes(self.net):
            key = f"{i}.{name}"
            if key not in tensors:
                raise KeyError(f"missing tensor {key!r}")
            if tensors[key].shape != dims:
                raise ShapeError(f"tensor {key!r} has dims {tensors[key].shape}, expected {dims}")
            if not np.all(np.isfinite(tensors[key])):
                raise ValueError(f"tensor {key!r} holds non-finite values")
            if name == "var" and np.any(tensors[key] < 0):
                raise ValueError(f"tensor {key!r} has negative variance")
        masks, alive = {}, {}
        for i in self.net.conv_indices():
            w = tensors[f"{i}.weight"]
            m = np.array(self.masks.get(i, np.ones(w.shape, bool)), dtype=bool)
            a = np.array(self.alive.get(i, np.ones(w.shape[0], bool)), dtype=bool)
            if m.shape != w.shape or a.shape != (w.shape[0],):
                raise ShapeError(f"mask/alive shape mismatch for layer {i}")
            if np.any(w[~m] != 0):
                raise ValueError(f"layer {i}: masked weights must be exactly zero")
            m.flags.writeable = False
            a.flags.writeable = False
            masks[i], alive[i] = m, a
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "alive", alive)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]

    def get(self, index: int, name: str) -> np.ndarray:
        return self.tensors[f"{index}.{name}"]

    def replace(self, tensors=None, masks=None, alive=None) -> "ModelParams":
        """New instance with the given entries overriding this one's."""
        return ModelParams(
            self.net,
            {**self.tensors, **(tensors or {})},
            {**self.masks, **(masks or {})},
            {**self.alive, **(alive or {})},
        )

    @classmethod
    def zeros(cls, net: NetworkConfig) -> "ModelParams":
        return cls(net, {f"{i}.{n}": np.zeros(d) for i, n, d in param_shapes(net)})


def group_bounds(i: int, c_in: int, c_out: int, g: int) -> tuple[int, int]:
    """First and last input channel (inclusive) feeding output channel ``i``."""
    if not 0 <= i < c_out:
        raise ValueError(f"output channel {i} outside [0, {c_out})")
    if c_in % g or c_out % g:
        raise ValueError(f"groups={g} must divide c_in={c_in} and c_out={c_out}")
    s = i // (c_out // g) * (c_in // g)
    return s, s + c_in // g - 1


def conv_windows(x: np.ndarray, layer: Conv1d) -> np.ndarray:
    """Zero-padded input windows, shape (C_in, T_out, K)."""
    xp = np.pad(x, ((0, 0), (layer.pad_left, layer.pad_right)))
    return sliding_window_view(xp, layer.kernel_size, axis=1)[:, :: layer.stride, :]


def conv1d_forward(x: np.ndarray, layer: Conv1d, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != layer.in_channels:
        raise ShapeError(f"conv1d: expected ({layer.in_channels}, T) input, got {x.shape}")
    g = layer.groups
    cig, cog = layer.in_channels // g, layer.out_channels // g
    win = conv_windows(x, layer)  # (C_in, T_out, K)
    t_out = win.shape[1]
    # (g, cig*K, T_out): channel-major then tap within each group
    cols = win.reshape(g, cig, t_out, layer.kernel_size).transpose(0, 1, 3, 2).reshape(g, cig * layer.kernel_size, t_out)
    w = np.asarray(weight, dtype=np.float64).reshape(g, cog, cig * layer.kernel_size)
    out = np.matmul(w, cols).reshape(layer.out_channels, t_out)
    return out + np.asarray(bias)[:, None]


def batchnorm_forward(x, gamma, beta, mean, var) -> np.ndarray:
    scale = np.asarray(gamma) / np.sqrt(np.asarray(var) + BN_EPS)
    return (np.asarray(x) - np.asarray(mean)[:, None]) * scale[:, None] + np.asarray(beta)[:, None]


def relu(x) -> np.ndarray:
    return np.maximum(x, 0.0)


def gap_forward(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] < 1:
        raise ShapeError("GAP over an empty axis")
    return x.mean(axis=1, keepdims=True)


def linear_forward(x, weight, bias) -> np.ndarray:
    flat = np.asarray(x, dtype=np.float64).reshape(-1)
    return (np.asarray(weight) @ flat + np.asarray(bias))[:, None]


def layer_forward(net: NetworkConfig, params: ModelParams, index: int, x: np.ndarray) -> np.ndarray:
    layer = net.layers[index]
    if isinstance(layer, Conv1d):
        return conv1d_forward(x, layer, params.get(index, "weight"), params.get(index, "bias"))
    if isinstance(layer, BatchNorm1d):
        return batchnorm_forward(x, *(params.get(index, n) for n in ("gamma", "beta", "mean", "var")))
    if isinstance(layer, ReLU):
        return relu(x)
    if isinstance(layer, GAP):
        return gap_forward(x)
    if isinstance(layer, Linear):
        return linear_forward(x, params.get(index, "weight"), params.get(index, "bias"))
    raise TypeError(f"unsupported layer {layer!r}")


def forward(net: NetworkConfig, params: ModelParams, signal) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the whole network; returns (logits, activation after every layer)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.shape != (net.input_channels, net.input_length):
        raise ShapeError(f"signal shape {x.shape} != {(net.input_channels, net.input_length)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal holds non-finite values")
    acts = []
    for i in range(len(net.layers)):
        x = layer_forward(net, params, i, x)
        acts.append(x)
    return x.reshape(-1), acts
