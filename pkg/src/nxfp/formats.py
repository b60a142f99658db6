"""Element formats and their quantization-level tables.

Every element code is sign-magnitude: the top bit is the sign, the rest is a
magnitude code that splits into a microexponent field and a trailing mantissa
field.  ``exp_bits == 0`` gives the classic block-floating-point grid (all
mantissa, uniform integer levels); ``exp_bits >= 1`` gives a minifloat grid
with subnormals at exponent field 0, an implicit leading one elsewhere, and no
Inf/NaN encodings.

Tables are built in the format's own scaled space, where the largest level L
satisfies ``2^emax <= L < 2^(emax+1)`` with ``emax = floor(log2(L))``.  Codecs
align different formats by applying a per-format ``2^-emax`` offset to the
shared block exponent, so a 4-bit minifloat grid {0, .5, 1, 1.5, 2, 3, 4, 6}
and the 4-bit integer grid {0..7} quantize the same scaled block.

Code recycling rebinds the otherwise wasted "-0" code (sign bit set, zero
magnitude) to a useful level, by default minus half the smallest nonzero
level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NumericInputError

__all__ = [
    "RecycleRule",
    "ElementFormat",
    "LevelTable",
    "build_level_table",
    "encode_scalar",
    "decode_scalar",
]


class RecycleRule(str, Enum):
    """How the -0 code is remapped when code recycling is enabled."""

    HALF_SMALLEST = "half-smallest"  # -(smallest nonzero level) / 2
    MIDPOINT_TOP = "midpoint-top"    # -(midpoint of the two largest levels)


@dataclass(frozen=True)
class ElementFormat:
    """Sign/exponent/mantissa bit layout of a single element code."""

    exp_bits: int
    mant_bits: int

    def __post_init__(self):
        if self.exp_bits < 0 or self.mant_bits < 0:
            raise ValueError("exp_bits and mant_bits must be non-negative")
        if not 3 <= self.total_bits <= 8:
            raise ValueError(
                f"total_bits must be in [3, 8], got {self.total_bits} "
                f"(e{self.exp_bits}m{self.mant_bits})"
            )

    @property
    def total_bits(self) -> int:
        return 1 + self.exp_bits + self.mant_bits

    @property
    def bias(self) -> int:
        # 2^(e-1) - 1; degenerates to 0 for exp_bits <= 1.
        return (1 << (self.exp_bits - 1)) - 1 if self.exp_bits >= 1 else 0

    @property
    def is_bfp(self) -> bool:
        return self.exp_bits == 0

    @property
    def num_magnitudes(self) -> int:
        return 1 << (self.exp_bits + self.mant_bits)

    def __str__(self) -> str:
        return f"e{self.exp_bits}m{self.mant_bits}"


def _magnitude(fmt: ElementFormat, mag_code: int) -> float:
    """Decode one magnitude code exactly (integer times a power of two)."""
    m = mag_code & ((1 << fmt.mant_bits) - 1)
    e = mag_code >> fmt.mant_bits
    if fmt.exp_bits == 0:
        return float(m)
    if e == 0:
        # subnormal: 0.M x 2^(1-bias)
        return math.ldexp(m, 1 - fmt.bias - fmt.mant_bits)
    # normal: 1.M x 2^(e-bias)
    return math.ldexp((1 << fmt.mant_bits) + m, e - fmt.bias - fmt.mant_bits)


@dataclass(frozen=True, eq=False)
class LevelTable:
    """Immutable signed level set for one element format.

    ``values_by_code[c]`` is the decoded value of code ``c``.  The sorted
    arrays drive nearest-level encoding: ``sorted_values`` holds the distinct
    signed levels ascending, ``sorted_codes`` the canonical code per level and
    ``tie_lo[i]`` whether a value exactly between ``sorted_values[i-1]`` and
    ``sorted_values[i]`` rounds to the lower one (ties prefer the even
    magnitude code, then the smaller magnitude).
    """

    fmt: ElementFormat
    magnitudes: np.ndarray
    values_by_code: np.ndarray
    recycled_value: float | None
    sorted_values: np.ndarray = field(repr=False)
    sorted_codes: np.ndarray = field(repr=False)
    tie_lo: np.ndarray = field(repr=False)
    emax: int
    qmax: float

    @property
    def recycled_code(self) -> int:
        # sign bit set, zero magnitude
        return 1 << (self.fmt.total_bits - 1)


def _recycled_value(fmt: ElementFormat, magnitudes: np.ndarray,
                    rule: RecycleRule, value: float | None) -> float:
    if value is not None:
        return float(value)
    if rule == RecycleRule.HALF_SMALLEST:
        return -float(magnitudes[1]) / 2.0
    if rule == RecycleRule.MIDPOINT_TOP:
        return -(float(magnitudes[-1]) + float(magnitudes[-2])) / 2.0
    raise ValueError(f"unknown recycle rule: {rule!r}")


_TABLE_CACHE: dict[tuple, LevelTable] = {}


def build_level_table(fmt: ElementFormat, recycle: bool = False,
                      rule: RecycleRule = RecycleRule.HALF_SMALLEST,
                      recycled_value: float | None = None) -> LevelTable:
    """Materialize the full signed level table for ``fmt``.

    With ``recycle`` the -0 code is bound to ``recycled_value`` if given,
    otherwise to the value derived from ``rule``.
    """
    key = (fmt, recycle, rule if recycle else None,
           recycled_value if recycle else None)
    cached = _TABLE_CACHE.get(key)
    if cached is not None:
        return cached

    n_mag = fmt.num_magnitudes
    half = 1 << (fmt.total_bits - 1)
    mags = np.array([_magnitude(fmt, c) for c in range(n_mag)], dtype=np.float64)
    if not np.all(np.diff(mags) > 0):
        raise ValueError(f"level table for {fmt} is not strictly increasing")

    values = np.empty(2 * half, dtype=np.float64)
    values[:n_mag] = mags
    values[half:half + n_mag] = -mags
    rec = None
    if recycle:
        rec = _recycled_value(fmt, mags, rule, recycled_value)
        values[half] = rec

    def rank(code: int) -> tuple:
        # canonical-code preference among equal values:
        # real level first, then even magnitude code, then lower code
        recycled = recycle and code == half
        return (1 if recycled else 0, (code & (half - 1)) & 1, code)

    order = sorted(range(2 * half), key=lambda c: (values[c], rank(c)))
    sorted_vals: list[float] = []
    sorted_codes: list[int] = []
    for code in order:
        v = float(values[code])
        if sorted_vals and v == sorted_vals[-1]:
            continue  # duplicate value: first (best-ranked) code wins
        sorted_vals.append(v)
        sorted_codes.append(code)

    n = len(sorted_vals)
    tie_lo = np.zeros(n, dtype=np.bool_)
    for i in range(1, n):
        lo_mag = sorted_codes[i - 1] & (half - 1)
        hi_mag = sorted_codes[i] & (half - 1)
        lo_even = (lo_mag & 1) == 0
        hi_even = (hi_mag & 1) == 0
        if lo_even != hi_even:
            tie_lo[i] = lo_even
        else:
            # same parity (recycled level next to zero): round toward zero
            tie_lo[i] = abs(sorted_vals[i - 1]) < abs(sorted_vals[i])

    qmax = float(mags[-1])
    table = LevelTable(
        fmt=fmt,
        magnitudes=mags,
        values_by_code=values,
        recycled_value=rec,
        sorted_values=np.array(sorted_vals, dtype=np.float64),
        sorted_codes=np.array(sorted_codes, dtype=np.uint8),
        tie_lo=tie_lo,
        emax=math.frexp(qmax)[1] - 1,
        qmax=qmax,
    )
    for arr in (table.magnitudes, table.values_by_code, table.sorted_values,
                table.sorted_codes, table.tie_lo):
        arr.setflags(write=False)
    _TABLE_CACHE[key] = table
    return table


def encode_scalar(value: float, table: LevelTable) -> int:
    """Code of the signed level nearest to ``value`` (saturating at the ends).

    Ties round to the even magnitude code.
    """
    if not math.isfinite(value):
        raise NumericInputError(f"cannot encode non-finite value {value!r}")
    from . import _kernels
    out = _kernels.get().encode_nearest(
        np.array([value], dtype=np.float64),
        table.sorted_values, table.sorted_codes, table.tie_lo)
    return int(out[0])


def decode_scalar(code: int, table: LevelTable) -> float:
    """Exact value of ``code`` (every bit pattern is valid)."""
    if not 0 <= code < len(table.values_by_code):
        raise ValueError(f"code {code} out of range for {table.fmt}")
    return float(table.values_by_code[code])
