"""Per-block quantization.

A block is quantized in three steps:

1. The shared exponent is the floor log2 of the block's largest magnitude,
   so the scaled block tops out in ``[2^emax, 2^(emax+1))`` of the element
   format's own space.
2. An optional 2-bit nano-mantissa multiplies the grid by 1 + m/4
   (m in 0..3), letting the largest level track the block maximum closely.
   The candidate m is the one whose grid best reconstructs the block
   maximum; the zero setting is always tried as well and the block MSE
   decides.
3. With adaptive format selection enabled, both the minifloat grid and the
   equal-width integer (BFP) grid are rounded and the lower-MSE one wins;
   a per-block format bit records the choice.

All candidate errors are measured in the original value space so different
nano scalings stay comparable.  Ties resolve to the minifloat format, then
to the earlier candidate in evaluation order, which keeps re-quantizing a
dequantized tensor bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import NumericInputError, ZeroBlockError
from .formats import ElementFormat, LevelTable, RecycleRule, build_level_table

__all__ = [
    "NanoSearch",
    "QuantConfig",
    "BlockScale",
    "BlockReport",
    "QuantizedBlock",
    "shared_exponent",
    "nano_candidate",
    "quantize_block",
    "quantize_tensor",
]

# stored shared-exponent byte is e + 127; 0xFF marks an all-zero block
SHARED_EXP_MIN = -127
SHARED_EXP_MAX = 127
ZERO_BLOCK_BYTE = 0xFF


class NanoSearch(str, Enum):
    ALG1 = "alg1"            # try {candidate m, 0}
    EXHAUSTIVE = "exhaustive"  # try all m in 0..3


@dataclass(frozen=True)
class QuantConfig:
    """Block size, element format and feature toggles for one codec."""

    block_size: int = 32
    element_bits: int = 4
    microexp_bits: int = 2
    nano_enabled: bool = False
    adaptive_enabled: bool = False
    recycle_enabled: bool = False
    recycle_rule: RecycleRule = RecycleRule.HALF_SMALLEST
    recycle_value: float | None = None
    nano_search: NanoSearch = NanoSearch.ALG1

    def __post_init__(self):
        if not 3 <= self.element_bits <= 8:
            raise ValueError(f"element_bits must be in [3, 8], got {self.element_bits}")
        if not 0 <= self.microexp_bits <= self.element_bits - 2:
            raise ValueError(
                f"microexp_bits must be in [0, {self.element_bits - 2}] "
                f"for {self.element_bits}-bit elements, got {self.microexp_bits}"
            )
        if self.block_size < 2:
            raise ValueError(f"block_size must be >= 2, got {self.block_size}")

    @property
    def element_format(self) -> ElementFormat:
        """The configured per-element format (microexponent grid)."""
        return ElementFormat(self.microexp_bits,
                             self.element_bits - 1 - self.microexp_bits)

    @property
    def bfp_format(self) -> ElementFormat:
        """The equal-width all-mantissa grid used by the adaptive branch."""
        return ElementFormat(0, self.element_bits - 1)

    @property
    def default_fmt_bit(self) -> int:
        """Format bit when there is nothing to choose (1=minifloat, 0=BFP)."""
        return 1 if self.microexp_bits >= 1 else 0

    def table(self, fmt: ElementFormat) -> LevelTable:
        return build_level_table(fmt, self.recycle_enabled, self.recycle_rule,
                                 self.recycle_value)


@dataclass(frozen=True)
class BlockScale:
    """Per-block scale: shared exponent, nano code, format bit.

    ``shared_exp is None`` marks the reserved all-zero block.
    """

    shared_exp: int | None
    nano_code: int = 0
    fmt: int = 1

    @property
    def nano_scale(self) -> float:
        return 1.0 + self.nano_code * 0.25


@dataclass(frozen=True)
class BlockReport:
    mse: float
    l1_max: float


@dataclass(frozen=True)
class QuantizedBlock:
    scale: BlockScale
    codes: np.ndarray
    report: BlockReport


def shared_exponent(block) -> int:
    """floor(log2(max |v|)) of a finite, not-all-zero block."""
    arr = np.asarray(block, dtype=np.float64)
    if arr.size == 0:
        raise NumericInputError("empty block")
    if not np.isfinite(arr).all():
        raise NumericInputError("block contains NaN or Inf")
    vmax = float(np.max(np.abs(arr)))
    if vmax == 0.0:
        raise ZeroBlockError("all-zero block uses the reserved scale encoding")
    return math.frexp(vmax)[1] - 1


def _nano_candidates_batch(vtop_scaled: np.ndarray, table: LevelTable) -> np.ndarray:
    """Per-block nano code whose grid best reconstructs the block maximum.

    ``vtop_scaled`` is the block maximum in the format's scaled space.  For
    each m in 0..3 the top value is rounded on the (1 + m/4)-scaled grid and
    the m with the smallest reconstruction error wins; ties go to the
    smallest m so exactly representable tops keep their encoding stable.
    """
    mags = table.magnitudes
    n = mags.size
    errs = np.empty((4, vtop_scaled.size), dtype=np.float64)
    for m in range(4):
        nano = 1.0 + m * 0.25
        t = vtop_scaled / nano
        idx = np.clip(np.searchsorted(mags, t, side="left"), 1, n - 1)
        lo = mags[idx - 1]
        hi = mags[idx]
        nearest = np.where(t - lo <= hi - t, lo, hi)
        errs[m] = np.abs(nearest * nano - vtop_scaled)
    return np.argmin(errs, axis=0).astype(np.uint8)


def nano_candidate(block, shared_exp: int, table: LevelTable) -> int:
    """Nano code candidate for one block (see ``_nano_candidates_batch``)."""
    arr = np.asarray(block, dtype=np.float64)
    vmax = float(np.max(np.abs(arr)))
    if vmax == 0.0:
        raise ZeroBlockError("all-zero block has no nano candidate")
    vtop = math.ldexp(vmax, table.emax - shared_exp)
    return int(_nano_candidates_batch(np.array([vtop]), table)[0])


def _branches(cfg: QuantConfig) -> list[tuple[int, LevelTable]]:
    """(fmt_bit, table) candidates; minifloat before BFP so ties go to it."""
    if cfg.microexp_bits == 0:
        return [(0, cfg.table(cfg.bfp_format))]
    branches = [(1, cfg.table(cfg.element_format))]
    if cfg.adaptive_enabled:
        branches.append((0, cfg.table(cfg.bfp_format)))
    return branches


def _reconstruct_blocks(e_bytes, nano_codes, fmt_bits, codes, cfg: QuantConfig):
    """Exact float64 reconstruction of (nblk, block_size) code rows."""
    out = np.zeros_like(codes, dtype=np.float64)
    zero = e_bytes == ZERO_BLOCK_BYTE
    e_shared = e_bytes.astype(np.int64) - 127
    for fmt_bit, fmt in ((1, cfg.element_format), (0, cfg.bfp_format)):
        rows = (fmt_bits == fmt_bit) & ~zero
        if not rows.any():
            continue
        table = cfg.table(fmt)
        k_shift = (e_shared[rows] - table.emax).astype(np.int32)
        scale = np.ldexp(1.0 + nano_codes[rows] * 0.25, k_shift)
        out[rows] = table.values_by_code[codes[rows]] * scale[:, None]
    return out


def _quantize_pass(blocks: np.ndarray, nvalid: np.ndarray, cfg: QuantConfig):
    """One winner-selection pass over zero-padded (nblk, block_size) blocks.

    Lanes at or beyond ``nvalid`` are padding: they encode to code 0 and are
    excluded from the error stats.
    """
    k = _kernels.get()
    nblk, bs = blocks.shape
    lane = np.arange(bs)
    mask = lane[None, :] < nvalid[:, None]

    absb = np.where(mask, np.abs(blocks), 0.0)
    vmax = absb.max(axis=1)
    nonzero = vmax > 0.0
    _, expo = np.frexp(vmax)
    e_shared = expo.astype(np.int64) - 1

    if nonzero.any():
        e_used = e_shared[nonzero]
        if e_used.min() < SHARED_EXP_MIN or e_used.max() > SHARED_EXP_MAX:
            bad = int(np.nonzero(nonzero)[0][
                (e_used < SHARED_EXP_MIN) | (e_used > SHARED_EXP_MAX)][0])
            raise NumericInputError(
                f"block {bad}: shared exponent outside [-127, 127]")

    best = None
    for fmt_bit, table in _branches(cfg):
        k_shift = (e_shared - table.emax).astype(np.int32)
        if cfg.nano_enabled:
            if cfg.nano_search == NanoSearch.EXHAUSTIVE:
                m_lists = [np.full(nblk, m, dtype=np.uint8) for m in range(4)]
            else:
                vtop = np.ldexp(vmax, -k_shift)
                m_lists = [_nano_candidates_batch(vtop, table),
                           np.zeros(nblk, dtype=np.uint8)]
        else:
            m_lists = [np.zeros(nblk, dtype=np.uint8)]

        for m_vec in m_lists:
            scale = np.ldexp(1.0 + m_vec * 0.25, k_shift)
            scaled = blocks / scale[:, None]
            codes = k.encode_nearest(
                np.ascontiguousarray(scaled.reshape(-1)),
                table.sorted_values, table.sorted_codes, table.tie_lo,
            ).reshape(nblk, bs)
            recon = table.values_by_code[codes] * scale[:, None]
            err = np.where(mask, blocks - recon, 0.0)
            sse, _, maxe = k.block_error_stats(err)
            cand = (sse, maxe, m_vec, np.full(nblk, fmt_bit, dtype=np.uint8), codes)
            if best is None:
                best = list(cand)
            else:
                upd = cand[0] < best[0]  # strictly better only: first wins ties
                for i in range(4):
                    best[i] = np.where(upd, cand[i], best[i])
                best[4] = np.where(upd[:, None], cand[4], best[4])

    sse, maxe, nano_codes, fmt_bits, codes = best

    zero = ~nonzero
    e_bytes = np.where(zero, ZERO_BLOCK_BYTE, e_shared + 127).astype(np.uint8)
    if zero.any():
        nano_codes = np.where(zero, 0, nano_codes).astype(np.uint8)
        fmt_bits = np.where(zero, cfg.default_fmt_bit, fmt_bits).astype(np.uint8)
        codes = np.where(zero[:, None], 0, codes).astype(np.uint8)
        sse = np.where(zero, 0.0, sse)
        maxe = np.where(zero, 0.0, maxe)

    return e_bytes, nano_codes.astype(np.uint8), fmt_bits.astype(np.uint8), \
        codes.astype(np.uint8), sse, maxe


def _quantize_blocks(blocks: np.ndarray, nvalid: np.ndarray, cfg: QuantConfig):
    """Quantize blocks and canonicalize the encoding.

    A reconstruction can be exactly representable under more than one
    (exponent, nano, format) combination, and the combination the first pass
    picks for the raw input is not always the one a fresh quantization of the
    reconstruction would pick.  To make quantize a fixed point under
    dequantize-then-quantize, a second pass runs winner selection on the
    exact reconstruction and its encoding is kept whenever it reproduces the
    reconstruction exactly (same values, same error, canonical bits).

    Returns (e_bytes, nano_codes, fmt_bits, codes, mse, l1_max).
    """
    e1, m1, f1, codes1, sse1, maxe1 = _quantize_pass(blocks, nvalid, cfg)
    recon = _reconstruct_blocks(e1, m1, f1, codes1, cfg)
    e2, m2, f2, codes2, sse2, _ = _quantize_pass(recon, nvalid, cfg)
    swap = sse2 == 0.0
    e_bytes = np.where(swap, e2, e1).astype(np.uint8)
    nano = np.where(swap, m2, m1).astype(np.uint8)
    fmt = np.where(swap, f2, f1).astype(np.uint8)
    codes = np.where(swap[:, None], codes2, codes1).astype(np.uint8)
    # error metrics are always against the original values
    return e_bytes, nano, fmt, codes, sse1 / nvalid, maxe1


def _as_float64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype not in (np.float16, np.float32, np.float64):
        raise NumericInputError(f"unsupported dtype {arr.dtype}; "
                                "expected float16/float32/float64")
    return arr.astype(np.float64)


def _check_finite(flat: np.ndarray) -> None:
    bad = ~np.isfinite(flat)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NumericInputError(
            f"non-finite value {flat[idx]!r} at flat index {idx}")


def quantize_block(block, cfg: QuantConfig, valid_len: int | None = None) -> QuantizedBlock:
    """Quantize one zero-padded block of exactly ``cfg.block_size`` values.

    ``valid_len`` is the logical length when the tail is padding; padded
    lanes are excluded from the error report.
    """
    arr = _as_float64(block)
    if arr.ndim != 1 or arr.size != cfg.block_size:
        raise NumericInputError(
            f"block length {arr.size} != block_size {cfg.block_size}")
    _check_finite(arr)
    n = cfg.block_size if valid_len is None else valid_len
    if not 1 <= n <= cfg.block_size:
        raise NumericInputError(f"valid_len {n} out of range")
    e_bytes, nano, fmt, codes, mse, maxe = _quantize_blocks(
        arr[None, :], np.array([n], dtype=np.int64), cfg)
    shared = None if e_bytes[0] == ZERO_BLOCK_BYTE else int(e_bytes[0]) - 127
    return QuantizedBlock(
        scale=BlockScale(shared, int(nano[0]), int(fmt[0])),
        codes=codes[0],
        report=BlockReport(float(mse[0]), float(maxe[0])),
    )


def quantize_tensor(values, cfg: QuantConfig):
    """Quantize a whole tensor into a PackedTensor.

    The tensor is flattened in C order and split into ``block_size`` blocks;
    the final partial block is zero-padded and its logical length recorded.
    """
    from .container import PackedTensor

    arr = _as_float64(values)
    if arr.size == 0:
        raise NumericInputError("cannot quantize an empty tensor")
    flat = arr.reshape(-1)
    _check_finite(flat)

    bs = cfg.block_size
    nblk = -(-flat.size // bs)
    padded = np.zeros(nblk * bs, dtype=np.float64)
    padded[: flat.size] = flat
    nvalid = np.full(nblk, bs, dtype=np.int64)
    if flat.size % bs:
        nvalid[-1] = flat.size % bs

    e_bytes, nano, fmt, codes, _, _ = _quantize_blocks(
        padded.reshape(nblk, bs), nvalid, cfg)
    payload = _kernels.get().pack_codes(
        np.ascontiguousarray(codes.reshape(-1)), cfg.element_bits)
    shape = arr.shape if arr.ndim else (1,)
    return PackedTensor(
        shape=tuple(int(d) for d in shape),
        logical_len=int(flat.size),
        cfg=cfg,
        e_bytes=e_bytes,
        nano_codes=nano,
        fmt_bits=fmt,
        payload=payload.tobytes(),
    )
