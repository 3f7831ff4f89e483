"""Seeded stand-ins for EEG recordings and trained weights."""

from __future__ import annotations

import numpy as np

from .ir import BatchNorm1d, Conv1d, Linear, NetworkConfig
from .reference import ModelParams

SAMPLE_RATE_HZ = 250.0


def gen_signal(seed: int, channels: int = 5, length: int = 1254, sample_rate: float = SAMPLE_RATE_HZ,
               n_tones: int = 4, noise: float = 0.3) -> np.ndarray:
    """Sum of random 4-30 Hz sinusoids plus white Gaussian noise, per channel."""
    if channels < 1 or length < 1 or sample_rate <= 0:
        raise ValueError("channels, length and sample_rate must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / sample_rate
    freqs = rng.uniform(4.0, 30.0, size=(channels, n_tones))
    amps = rng.uniform(0.2, 1.0, size=(channels, n_tones))
    phases = rng.uniform(0.0, 2 * np.pi, size=(channels, n_tones))
    tones = amps[..., None] * np.sin(2 * np.pi * freqs[..., None] * t + phases[..., None])
    return tones.sum(axis=1) + noise * rng.standard_normal((channels, length))


def gen_params(seed: int, net: NetworkConfig) -> ModelParams:
    """Gaussian weights scaled by fan-in; BN running stats at mean 0, var 1.

    BN gamma is drawn around 1 and beta around 0 with enough spread that the
    default bias-driven thresholds kill a handful of channels.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv1d):
            shape = (layer.out_channels, layer.in_channels // layer.groups, layer.kernel_size)
            tensors[f"{i}.weight"] = rng.standard_normal(shape) * np.sqrt(2.0 / layer.fan_in)
            tensors[f"{i}.bias"] = rng.normal(0.0, 0.05, layer.out_channels)
        elif isinstance(layer, BatchNorm1d):
            c = layer.channels
            tensors[f"{i}.gamma"] = rng.normal(1.0, 0.1, c)
            tensors[f"{i}.beta"] = rng.normal(0.0, 0.1, c)
            tensors[f"{i}.mean"] = np.zeros(c)
            tensors[f"{i}.var"] = np.ones(c)
        elif isinstance(layer, Linear):
            tensors[f"{i}.weight"] = rng.standard_normal((layer.out_features, layer.in_features)) / np.sqrt(layer.in_features)
            tensors[f"{i}.bias"] = rng.normal(0.0, 0.05, layer.out_features)
    return ModelParams(net, tensors)
