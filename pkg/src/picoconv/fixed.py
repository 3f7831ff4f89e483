"""Signed two's-complement fixed-point formats and exact integer rounding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FxFormat:
    width: int
    fraction: int

    def __post_init__(self):
        if not 2 <= self.width <= 32:
            raise ValueError(f"width must be in [2, 32], got {self.width}")
        if not 0 <= self.fraction < self.width:
            raise ValueError(f"fraction must be in [0, {self.width}), got {self.fraction}")

    @property
    def lo(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def hi(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def quantum(self) -> float:
        return 2.0 ** -self.fraction

    def to_dict(self) -> dict:
        return {"width": self.width, "fraction": self.fraction}


def fraction_bits(max_abs: float, width: int, guard: bool = False) -> int:
    """Largest fraction count whose integer range covers ``max_abs``.

    Without ``guard``: ``max_abs < 2**(width-1-f)`` (strict, so the value is
    representable).  With ``guard`` one spare integer bit is kept:
    ``max_abs <= 2**(width-2-f)``.  Clamped to ``[0, width-1]``; an all-zero
    tensor gets ``width-1``.
    """
    if max_abs == 0:
        return width - 1
    for f in range(width - 1, -1, -1):
        if guard:
            if max_abs <= 2.0 ** (width - 2 - f):
                return f
        elif max_abs < 2.0 ** (width - 1 - f):
            return f
    return 0


def format_for(values, width: int, guard: bool = False) -> FxFormat:
    values = np.asarray(values, dtype=np.float64)
    max_abs = float(np.max(np.abs(values))) if values.size else 0.0
    return FxFormat(width, fraction_bits(max_abs, width, guard))


def quantize_array(values, fmt: FxFormat) -> tuple[np.ndarray, int]:
    """Round-to-nearest-even onto ``fmt`` with saturation.

    Returns ``(codes, n_saturated)``.  Scaling by a power of two is exact in
    binary floating point, so ``np.rint`` sees the exact scaled value.
    """
    scaled = np.asarray(values, dtype=np.float64) * (2.0 ** fmt.fraction)
    codes = np.rint(scaled)
    n_sat = int(np.count_nonzero((codes < fmt.lo) | (codes > fmt.hi)))
    return np.clip(codes, fmt.lo, fmt.hi).astype(np.int64), n_sat


def dequantize(codes, fmt: FxFormat) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * fmt.quantum


def round_div(num, den):
    """Round ``num / den`` to the nearest integer, ties to even (``den > 0``).

    Works on Python ints and numpy object arrays of Python ints alike.
    """
    q = num // den
    r = num - q * den
    twice = 2 * r
    up = (twice > den) | ((twice == den) & (q % 2 == 1))
    if isinstance(up, np.ndarray):
        return q + up.astype(object)
    return q + int(up)


def round_shift(value, shift: int):
    """``value * 2**-shift`` rounded half-to-even; left shift when ``shift < 0``."""
    if shift <= 0:
        return value * (1 << -shift)
    return round_div(value, 1 << shift)


def saturate(codes, fmt: FxFormat):
    """Clamp integer codes into ``fmt``; returns ``(codes, saturated mask/flag)``."""
    if isinstance(codes, np.ndarray):
        sat = (codes < fmt.lo) | (codes > fmt.hi)
        out = np.where(codes < fmt.lo, fmt.lo, np.where(codes > fmt.hi, fmt.hi, codes))
        return out, sat.astype(bool)
    if codes < fmt.lo:
        return fmt.lo, True
    if codes > fmt.hi:
        return fmt.hi, True
    return codes, False


def as_object(a) -> np.ndarray:
    """int64 array -> object array of Python ints (arbitrary precision)."""
    return np.asarray(a, dtype=np.int64).astype(object)
