"""On-the-fly dequantization and a reference GEMM over packed operands.

Decoding a block is: look the code up in the level table of whichever grid
the format bit selects, remap the recycled code if enabled, multiply by the
nano scale (1 + m/4), and shift by the shared exponent minus the format's own
top exponent.  Everything is computed exactly in float64 and only rounded
once when converting to the requested target precision.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import _kernels
from .errors import NumericInputError
from .quant import ZERO_BLOCK_BYTE, QuantConfig, _reconstruct_blocks

__all__ = ["DequantTarget", "dequantize_block", "dequantize_tensor", "gemm_dequant"]


class DequantTarget(str, Enum):
    BINARY16 = "f16"
    BFLOAT16 = "bf16"
    BINARY32 = "f32"


def _round_bfloat16(x32: np.ndarray) -> np.ndarray:
    """Round float32 values to bfloat16 (round-to-nearest-even), kept in a
    float32 array since numpy has no bfloat16 dtype."""
    bits = x32.view(np.uint32)
    rounded = (bits + 0x7FFF + ((bits >> 16) & 1)) >> 16
    return (rounded.astype(np.uint32) << 16).view(np.float32)


def round_to_target(values: np.ndarray, target: DequantTarget) -> np.ndarray:
    """Round exact float64 values once, into the target precision."""
    if target == DequantTarget.BINARY32:
        return values.astype(np.float32)
    if target == DequantTarget.BINARY16:
        return values.astype(np.float16)
    if target == DequantTarget.BFLOAT16:
        return _round_bfloat16(values.astype(np.float32))
    raise ValueError(f"unknown dequant target {target!r}")


def dequantize_block(scale, codes, cfg: QuantConfig,
                     target: DequantTarget = DequantTarget.BINARY32) -> np.ndarray:
    """Decode one block (a BlockScale plus ``block_size`` element codes)."""
    codes = np.asarray(codes, dtype=np.uint8)
    if codes.ndim != 1 or codes.size != cfg.block_size:
        raise NumericInputError(
            f"codes length {codes.size} != block_size {cfg.block_size}")
    e_byte = ZERO_BLOCK_BYTE if scale.shared_exp is None else scale.shared_exp + 127
    vals = _reconstruct_blocks(
        np.array([e_byte], dtype=np.uint8),
        np.array([scale.nano_code], dtype=np.uint8),
        np.array([scale.fmt], dtype=np.uint8),
        codes[None, :], cfg)
    return round_to_target(vals[0], target)


def dequantize_tensor(packed, target: DequantTarget = DequantTarget.BINARY32) -> np.ndarray:
    """Decode a PackedTensor back to a full-precision array of its shape."""
    cfg = packed.cfg
    codes = packed.codes()
    vals = _reconstruct_blocks(packed.e_bytes, packed.nano_codes,
                               packed.fmt_bits, codes, cfg)
    flat = vals.reshape(-1)[: packed.logical_len]
    return round_to_target(flat, target).reshape(packed.shape)


def _operand_f32(x, target: DequantTarget) -> np.ndarray:
    from .container import PackedTensor

    if isinstance(x, PackedTensor):
        vals = dequantize_tensor(x, target)
    else:
        vals = round_to_target(np.asarray(x, dtype=np.float64), target)
    if vals.ndim != 2:
        raise NumericInputError(f"gemm operand must be 2-D, got shape {vals.shape}")
    return np.ascontiguousarray(vals, dtype=np.float32)


def gemm_dequant(a, b, target: DequantTarget = DequantTarget.BINARY32) -> np.ndarray:
    """Matrix product of dequantized operands.

    Accumulates in float32, sequentially over the inner dimension, so the
    result is bit-identical to dequantizing both operands and running a
    plain triple-loop float32 matmul.
    """
    a32 = _operand_f32(a, target)
    b32 = _operand_f32(b, target)
    if a32.shape[1] != b32.shape[0]:
        raise NumericInputError(
            f"inner dimensions disagree: {a32.shape} x {b32.shape}")
    return _kernels.get().gemm_f32(a32, b32)
