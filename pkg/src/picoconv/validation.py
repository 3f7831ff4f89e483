"""Input checks shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np

from .ir import NetworkConfig, ShapeError


def check_signal(signal, net: NetworkConfig) -> np.ndarray:
    """A single (channels, length) finite float64 signal matching ``net``."""
    x = np.asarray(signal, dtype=np.float64)
    expected = (net.input_channels, net.input_length)
    if x.shape != expected:
        raise ShapeError(f"signal shape {x.shape} != {expected}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains NaN or inf")
    return x


def check_signals(X, net: NetworkConfig) -> np.ndarray:
    """A batch of signals as a (n, channels, length) array; a single 2-D signal is promoted."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (n, channels, length) batch, got shape {X.shape}")
    for x in X:
        check_signal(x, net)
    return X


def check_thresholds(values, n: int | None = None, nonnegative: bool = False, name: str = "thresholds") -> tuple:
    values = tuple(float(v) for v in np.atleast_1d(values))
    if n is not None and len(values) != n:
        raise ValueError(f"{name}: expected {n} values, got {len(values)}")
    if not all(np.isfinite(values)):
        raise ValueError(f"{name}: values must be finite")
    if nonnegative and any(v < 0 for v in values):
        raise ValueError(f"{name}: values must be >= 0")
    return values
