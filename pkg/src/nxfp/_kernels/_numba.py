"""Numba-jitted kernels (hot path).

Mirrors ``_numpy.py`` exactly; no fastmath anywhere so float results stay
bit-identical to the fallback.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def encode_nearest(values, sorted_values, sorted_codes, tie_lo):
    n = sorted_values.size
    out = np.empty(values.size, dtype=np.uint8)
    for i in range(values.size):
        v = values[i]
        # bisect_left
        lo_i = 0
        hi_i = n
        while lo_i < hi_i:
            mid = (lo_i + hi_i) >> 1
            if sorted_values[mid] < v:
                lo_i = mid + 1
            else:
                hi_i = mid
        idx = lo_i
        if idx < 1:
            idx = 1
        elif idx > n - 1:
            idx = n - 1
        d_lo = v - sorted_values[idx - 1]
        d_hi = sorted_values[idx] - v
        if d_lo < d_hi or (d_lo == d_hi and tie_lo[idx]):
            out[i] = sorted_codes[idx - 1]
        else:
            out[i] = sorted_codes[idx]
    return out


@njit(cache=True)
def block_error_stats(err):
    nblk, bs = err.shape
    sse = np.zeros(nblk, dtype=np.float64)
    sae = np.zeros(nblk, dtype=np.float64)
    mx = np.zeros(nblk, dtype=np.float64)
    for i in range(nblk):
        s = 0.0
        t = 0.0
        m = 0.0
        for j in range(bs):
            e = err[i, j]
            a = abs(e)
            s = s + e * e
            t = t + a
            if a > m:
                m = a
        sse[i] = s
        sae[i] = t
        mx[i] = m
    return sse, sae, mx


@njit(cache=True)
def pack_codes(codes, nbits):
    n = codes.size
    out = np.zeros((n * nbits + 7) // 8, dtype=np.uint8)
    for i in range(n):
        c = codes[i]
        base = i * nbits
        for j in range(nbits):
            if (c >> j) & 1:
                p = base + j
                out[p >> 3] |= np.uint8(1 << (p & 7))
    return out


@njit(cache=True)
def unpack_codes(buf, nbits, count):
    out = np.zeros(count, dtype=np.uint8)
    for i in range(count):
        base = i * nbits
        c = 0
        for j in range(nbits):
            p = base + j
            if (buf[p >> 3] >> (p & 7)) & 1:
                c |= 1 << j
        out[i] = np.uint8(c)
    return out


@njit(cache=True)
def gemm_f32(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for kk in range(k):
        for i in range(m):
            aik = a[i, kk]
            for j in range(n):
                out[i, j] = out[i, j] + aik * b[kk, j]
    return out
