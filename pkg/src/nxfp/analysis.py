"""Quantization-error reports, scaled-distribution profiling and sweeps.

Every number reported here is recomputed from (packed tensor, original
values) with deterministic summation: per-block error sums accumulate in
element order and blocks aggregate with ``math.fsum``, so reports are
byte-identical run to run regardless of backend.

CSV output: one header row, stable column order, numbers at 9 significant
digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .container import footprint_bits_per_element
from .dequant import _reconstruct_blocks
from .errors import NumericInputError
from .quant import QuantConfig, _as_float64, _check_finite, _quantize_blocks

__all__ = [
    "Metrics",
    "ErrorReport",
    "ScaledHistogram",
    "FEATURE_SETS",
    "error_stats",
    "profile_scaled_distribution",
    "ablation_sweep",
    "recycled_value_sweep",
    "block_size_sweep",
    "microexp_config_sweep",
    "format_number",
    "write_csv",
    "histogram_rows",
]

# cumulative feature chain plus the plain-BFP reference
FEATURE_SETS = ("mxfp", "mxfp_nm", "mxfp_nm_am", "nxfp", "bfp")


@dataclass(frozen=True)
class Metrics:
    mse: float
    l1: float       # mean absolute error
    max_abs: float


@dataclass(frozen=True)
class ErrorReport:
    """Per-feature-set error metrics for one tensor."""

    n_elements: int
    sets: dict[str, Metrics]
    bfp_fraction: dict[str, float]  # fraction of blocks on the integer grid
    per_block_mse: dict[str, np.ndarray]

    def reduction_vs(self, key: str, baseline: str = "mxfp") -> float:
        """Relative MSE reduction of ``key`` against ``baseline``."""
        base = self.sets[baseline].mse
        return 0.0 if base == 0.0 else 1.0 - self.sets[key].mse / base


@dataclass(frozen=True)
class ScaledHistogram:
    """Distribution of block values after shared-exponent scaling."""

    bin_edges: np.ndarray
    counts: np.ndarray
    level_positions: np.ndarray
    outlier_fraction: float   # |v| in (largest level, 2^(emax+1))
    vacant_fraction: float    # |v| between the two largest levels
    n_elements: int


def _blockify(values) -> tuple[np.ndarray, int]:
    flat = _as_float64(values).reshape(-1)
    if flat.size == 0:
        raise NumericInputError("empty tensor")
    _check_finite(flat)
    return flat, flat.size


def _pad_blocks(flat: np.ndarray, block_size: int):
    nblk = -(-flat.size // block_size)
    padded = np.zeros(nblk * block_size, dtype=np.float64)
    padded[: flat.size] = flat
    nvalid = np.full(nblk, block_size, dtype=np.int64)
    if flat.size % block_size:
        nvalid[-1] = flat.size % block_size
    return padded.reshape(nblk, block_size), nvalid


def _measure(blocks, nvalid, cfg: QuantConfig):
    """Quantize and recompute errors from the reconstruction."""
    e_bytes, nano, fmt, codes, _, _ = _quantize_blocks(blocks, nvalid, cfg)
    recon = _reconstruct_blocks(e_bytes, nano, fmt, codes, cfg)
    mask = np.arange(blocks.shape[1])[None, :] < nvalid[:, None]
    err = np.where(mask, blocks - recon, 0.0)
    sse, sae, maxe = _kernels.get().block_error_stats(err)
    n = int(nvalid.sum())
    metrics = Metrics(
        mse=math.fsum(sse.tolist()) / n,
        l1=math.fsum(sae.tolist()) / n,
        max_abs=float(maxe.max()),
    )
    return metrics, sse / nvalid, float(np.mean(fmt == 0))


def error_stats(values, cfg: QuantConfig):
    """(Metrics, per-block MSE, BFP-block fraction) for one config."""
    flat, _ = _blockify(values)
    blocks, nvalid = _pad_blocks(flat, cfg.block_size)
    return _measure(blocks, nvalid, cfg)


def _feature_cfg(name: str, element_bits: int, block_size: int,
                 microexp_bits: int | None = None) -> QuantConfig:
    mu = min(2, element_bits - 2) if microexp_bits is None else microexp_bits
    base = dict(block_size=block_size, element_bits=element_bits,
                microexp_bits=mu)
    if name == "mxfp":
        return QuantConfig(**base)
    if name == "mxfp_nm":
        return QuantConfig(**base, nano_enabled=True)
    if name == "mxfp_nm_am":
        return QuantConfig(**base, nano_enabled=True, adaptive_enabled=True)
    if name == "nxfp":
        return QuantConfig(**base, nano_enabled=True, adaptive_enabled=True,
                           recycle_enabled=True)
    if name == "bfp":
        return QuantConfig(block_size=block_size, element_bits=element_bits,
                           microexp_bits=0)
    raise ValueError(f"unknown feature set {name!r}")


def ablation_sweep(values, element_bits: int, block_size: int = 32,
                   microexp_bits: int | None = None) -> ErrorReport:
    """Errors for the cumulative feature chain mxfp -> +nm -> +am -> +cr,
    plus the plain integer-grid reference."""
    flat, n = _blockify(values)
    blocks, nvalid = _pad_blocks(flat, block_size)
    sets, fractions, per_block = {}, {}, {}
    for name in FEATURE_SETS:
        cfg = _feature_cfg(name, element_bits, block_size, microexp_bits)
        metrics, mse_blocks, bfp_frac = _measure(blocks, nvalid, cfg)
        sets[name] = metrics
        fractions[name] = bfp_frac
        per_block[name] = mse_blocks
    return ErrorReport(n_elements=n, sets=sets, bfp_fraction=fractions,
                       per_block_mse=per_block)


def profile_scaled_distribution(values, cfg: QuantConfig, bins: int = 64) -> ScaledHistogram:
    """Histogram of values scaled per block by the shared exponent.

    Also reports the fraction of elements in the unreachable gap above the
    largest level and in the vacant gap between the two largest levels.
    """
    flat, n = _blockify(values)
    blocks, nvalid = _pad_blocks(flat, cfg.block_size)
    table = cfg.table(cfg.element_format)

    mask = np.arange(cfg.block_size)[None, :] < nvalid[:, None]
    absb = np.where(mask, np.abs(blocks), 0.0)
    vmax = absb.max(axis=1)
    _, expo = np.frexp(vmax)
    shift = (table.emax - (expo.astype(np.int64) - 1)).astype(np.int32)
    scaled = np.ldexp(blocks, shift[:, None])
    scaled = np.where(vmax[:, None] > 0, scaled, 0.0)  # zero blocks stay zero
    scaled = scaled[mask]

    top = float(2.0 ** (table.emax + 1))
    edges = np.linspace(-top, top, bins + 1)
    counts, _ = np.histogram(scaled, bins=edges)

    mags = np.abs(scaled)
    qmax = table.qmax
    second = float(table.magnitudes[-2])
    outlier = float(np.count_nonzero((mags > qmax) & (mags < top))) / n
    vacant = float(np.count_nonzero((mags > second) & (mags < qmax))) / n

    levels = np.concatenate([-table.magnitudes[::-1], table.magnitudes])
    return ScaledHistogram(
        bin_edges=edges, counts=counts, level_positions=np.unique(levels),
        outlier_fraction=outlier, vacant_fraction=vacant, n_elements=n,
    )


def default_recycle_candidates(cfg: QuantConfig) -> list[float]:
    """Midpoints of adjacent positive levels, plus half the smallest level,
    as negative remap values (the -0 code keeps its sign)."""
    mags = cfg.table(cfg.element_format).magnitudes
    cands = [-(float(mags[i]) + float(mags[i + 1])) / 2.0
             for i in range(len(mags) - 1)]
    half_smallest = -float(mags[1]) / 2.0
    if half_smallest not in cands:
        cands.append(half_smallest)
    return cands


def recycled_value_sweep(values, cfg: QuantConfig,
                         candidates: list[float] | None = None) -> list[tuple[float, float]]:
    """(remap value, MSE) per candidate, sorted ascending by MSE."""
    if not cfg.recycle_enabled:
        raise NumericInputError("recycled_value_sweep needs recycle enabled")
    if candidates is None:
        candidates = default_recycle_candidates(cfg)
    if not candidates:
        raise NumericInputError("empty candidate list")
    flat, _ = _blockify(values)
    blocks, nvalid = _pad_blocks(flat, cfg.block_size)
    rows = []
    for cand in candidates:
        cfg_c = QuantConfig(
            block_size=cfg.block_size, element_bits=cfg.element_bits,
            microexp_bits=cfg.microexp_bits, nano_enabled=cfg.nano_enabled,
            adaptive_enabled=cfg.adaptive_enabled, recycle_enabled=True,
            recycle_rule=cfg.recycle_rule, recycle_value=float(cand),
            nano_search=cfg.nano_search,
        )
        metrics, _, _ = _measure(blocks, nvalid, cfg_c)
        rows.append((float(cand), metrics.mse))
    rows.sort(key=lambda r: (r[1], r[0]))
    return rows


def block_size_sweep(values, element_bits: int,
                     sizes=(8, 16, 32, 64, 128)) -> list[tuple[int, str, Fraction, float]]:
    """Rows of (block size, format name, bits/element, MSE)."""
    if not sizes:
        raise NumericInputError("empty block-size list")
    flat, _ = _blockify(values)
    rows = []
    for bs in sizes:
        blocks, nvalid = _pad_blocks(flat, bs)
        for name in ("bfp", "mxfp", "nxfp"):
            cfg = _feature_cfg(name, element_bits, bs)
            metrics, _, _ = _measure(blocks, nvalid, cfg)
            rows.append((bs, name, footprint_bits_per_element(cfg), metrics.mse))
    return rows


def microexp_config_sweep(values, element_bits: int,
                          block_size: int = 32) -> list[tuple[int, float]]:
    """(microexponent bits, MSE) for every width the element budget allows."""
    flat, _ = _blockify(values)
    blocks, nvalid = _pad_blocks(flat, block_size)
    rows = []
    for mu in range(element_bits - 1):
        cfg = QuantConfig(block_size=block_size, element_bits=element_bits,
                          microexp_bits=mu)
        metrics, _, _ = _measure(blocks, nvalid, cfg)
        rows.append((mu, metrics.mse))
    return rows


def format_number(x) -> str:
    """Canonical CSV number formatting: 9 significant digits."""
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(c if isinstance(c, str) else format_number(c)
                             for c in row) + "\n")


def histogram_rows(h: ScaledHistogram):
    return [(float(h.bin_edges[i]), float(h.bin_edges[i + 1]), int(h.counts[i]))
            for i in range(len(h.counts))]
