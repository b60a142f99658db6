"""Pure-numpy kernels (reference path).

Every function here must produce bit-identical results to its numba twin in
``_numba.py``: same IEEE operations in the same order.  Reductions that are
order-sensitive (error sums, GEMM accumulation) therefore iterate the
reduced axis in a Python loop and vectorize across the other axes, which
matches the per-element sequential order of the numba loops.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def encode_nearest(values, sorted_values, sorted_codes, tie_lo):
    """Nearest-level codes for a flat float64 array (saturating)."""
    n = sorted_values.size
    idx = np.searchsorted(sorted_values, values, side="left")
    idx = np.clip(idx, 1, n - 1)
    lo = sorted_values[idx - 1]
    hi = sorted_values[idx]
    d_lo = values - lo
    d_hi = hi - values
    pick_lo = (d_lo < d_hi) | ((d_lo == d_hi) & tie_lo[idx])
    return sorted_codes[np.where(pick_lo, idx - 1, idx)]


def block_error_stats(err):
    """Per-row (sse, abs-error sum, max abs error), accumulated column by
    column so the order matches the numba row loops."""
    nblk, bs = err.shape
    sse = np.zeros(nblk, dtype=np.float64)
    sae = np.zeros(nblk, dtype=np.float64)
    mx = np.zeros(nblk, dtype=np.float64)
    for j in range(bs):
        e = err[:, j]
        a = np.abs(e)
        sse = sse + e * e
        sae = sae + a
        mx = np.maximum(mx, a)
    return sse, sae, mx


def pack_codes(codes, nbits):
    """Pack flat uint8 codes into bytes, LSB-first within each byte."""
    shifts = np.arange(nbits, dtype=np.uint8)
    bits = ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little")


def unpack_codes(buf, nbits, count):
    """Inverse of :func:`pack_codes` for ``count`` codes."""
    bits = np.unpackbits(buf, count=count * nbits, bitorder="little")
    bits = bits.reshape(count, nbits).astype(np.uint8)
    shifts = np.arange(nbits, dtype=np.uint8)
    return (bits << shifts).sum(axis=1).astype(np.uint8)


def gemm_f32(a, b):
    """float32 matmul with sequential accumulation over the inner dim."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for kk in range(k):
        out += a[:, kk : kk + 1] * b[kk : kk + 1, :]
    return out
