"""Bit-exact saturating fixed-point arithmetic shared by all neural datapaths.

Values are stored as signed integers scaled by ``2**frac_bits``.  All
arithmetic saturates at the storage-width bounds instead of wrapping:
wrapping would silently corrupt membrane potentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FixedPoint",
    "FracBitsMismatchError",
    "quantize",
    "quantize_array",
    "round_half_away",
    "sat_add",
    "to_raw",
]


class FracBitsMismatchError(ValueError):
    """Two fixed-point operands with different fractional scaling."""


def _bounds(total_bits: int) -> tuple[int, int]:
    return -(1 << (total_bits - 1)), (1 << (total_bits - 1)) - 1


@dataclass(frozen=True)
class FixedPoint:
    """A signed integer-coded value: ``value = raw / 2**frac_bits``.

    ``total_bits`` is the storage width (8 for synaptic weights, 24 for
    membrane accumulators by default); ``raw`` must always lie within the
    signed range of that width.
    """

    raw: int
    frac_bits: int
    total_bits: int

    def __post_init__(self):
        if not 0 <= self.frac_bits <= 15:
            raise ValueError(f"frac_bits must be in [0, 15], got {self.frac_bits}")
        if self.frac_bits >= self.total_bits:
            raise ValueError(
                f"frac_bits ({self.frac_bits}) must be < total_bits ({self.total_bits})"
            )
        lo, hi = _bounds(self.total_bits)
        if not lo <= self.raw <= hi:
            raise ValueError(
                f"raw={self.raw} outside signed {self.total_bits}-bit range [{lo}, {hi}]"
            )

    @property
    def value(self) -> float:
        return self.raw / (1 << self.frac_bits)

    def with_raw(self, raw: int) -> "FixedPoint":
        return FixedPoint(raw, self.frac_bits, self.total_bits)

    def __repr__(self):
        return f"FixedPoint({self.raw}, q{self.frac_bits}, {self.total_bits}b ~ {self.value:g})"


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (HDL-style rounding)."""
    if x >= 0:
        return int(np.floor(x + 0.5))
    return int(np.ceil(x - 0.5))


def quantize(x: float, frac_bits: int, total_bits: int) -> FixedPoint:
    """Encode a real number, rounding half away from zero and saturating.

    Saturation absorbs out-of-range input, so this never raises for large
    magnitudes.
    """
    if frac_bits >= total_bits:
        raise ValueError(f"frac_bits ({frac_bits}) must be < total_bits ({total_bits})")
    raw = round_half_away(x * (1 << frac_bits))
    lo, hi = _bounds(total_bits)
    raw = min(max(raw, lo), hi)
    return FixedPoint(raw, frac_bits, total_bits)


def quantize_array(x: np.ndarray, frac_bits: int, total_bits: int) -> np.ndarray:
    """Vectorised :func:`quantize`; returns raw codes as int32."""
    if frac_bits >= total_bits:
        raise ValueError(f"frac_bits ({frac_bits}) must be < total_bits ({total_bits})")
    scaled = np.asarray(x, dtype=np.float64) * (1 << frac_bits)
    raw = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    lo, hi = _bounds(total_bits)
    return np.clip(raw, lo, hi).astype(np.int32)


def sat_add(a: FixedPoint, b: FixedPoint) -> FixedPoint:
    """Saturating add; operands must share frac_bits.

    The result carries the wider of the two storage widths and clamps
    there.
    """
    if a.frac_bits != b.frac_bits:
        raise FracBitsMismatchError(
            f"cannot add q{a.frac_bits} to q{b.frac_bits} operand"
        )
    total_bits = max(a.total_bits, b.total_bits)
    lo, hi = _bounds(total_bits)
    raw = min(max(a.raw + b.raw, lo), hi)
    return FixedPoint(raw, a.frac_bits, total_bits)


def to_raw(value: float, frac_bits: int) -> int:
    """Scale a real value to raw code without width clamping."""
    return round_half_away(value * (1 << frac_bits))
