"""Command-line interface: quantize, dequantize, inspect, analyze, sweep,
compare.

Format specs name a codec: "bfp4" (integer grid), "mxfp4" (minifloat grid),
"nxfp4" (minifloat grid plus nano-mantissa, adaptive format selection and
code recycling).  An explicit "-eXmY" suffix overrides the microexponent
split, e.g. "mxfp6-e3m2".  Exit codes: 0 success, 1 usage error, 2 io/format
error, 3 numeric-input error.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from fractions import Fraction

import numpy as np

from . import _kernels, analysis, container, dequant, ingest, quant
from .errors import (
    ContainerError,
    FormatSpecError,
    IngestError,
    NumericInputError,
    NxfpError,
    UsageError,
)
from .formats import RecycleRule
from .quant import NanoSearch, QuantConfig

__all__ = ["parse_format_spec", "main", "entry"]

_SPEC_RE = re.compile(r"^(bfp|mxfp|nxfp)([3-8])(?:-e(\d+)m(\d+))?$")


def parse_format_spec(spec: str, block_size: int = 32, *,
                      no_nano: bool = False, no_adaptive: bool = False,
                      no_recycle: bool = False,
                      recycle_rule: str = "half-smallest",
                      nano_search: str = "alg1") -> QuantConfig:
    """Turn a format spec string plus feature flags into a QuantConfig."""
    m = _SPEC_RE.match(spec.strip().lower())
    if not m:
        raise FormatSpecError(
            f"cannot parse format spec {spec!r} "
            "(expected e.g. bfp4, mxfp4, nxfp5, mxfp6-e2m3)")
    family, bits_s, exp_s, mant_s = m.groups()
    bits = int(bits_s)
    if exp_s is not None:
        exp, mant = int(exp_s), int(mant_s)
        if 1 + exp + mant != bits:
            raise FormatSpecError(
                f"{spec!r}: e{exp}m{mant} needs {1 + exp + mant} bits, not {bits}")
    else:
        exp = 0 if family == "bfp" else min(2, bits - 2)
    if family == "bfp" and exp != 0:
        raise FormatSpecError(f"{spec!r}: bfp formats have no microexponent bits")
    if exp > bits - 2:
        raise FormatSpecError(
            f"{spec!r}: at most {bits - 2} microexponent bits fit in {bits}-bit elements")

    features = family == "nxfp"
    try:
        return QuantConfig(
            block_size=block_size,
            element_bits=bits,
            microexp_bits=exp,
            nano_enabled=features and not no_nano,
            adaptive_enabled=features and not no_adaptive,
            recycle_enabled=features and not no_recycle,
            recycle_rule=RecycleRule(recycle_rule),
            nano_search=NanoSearch(nano_search),
        )
    except ValueError as exc:
        raise FormatSpecError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise UsageError(message)


def _add_format_flags(p, required=True):
    p.add_argument("--format", required=required,
                   help="format spec, e.g. nxfp4 or mxfp6-e2m3")
    p.add_argument("--block-size", type=int, default=32)
    p.add_argument("--no-nano", action="store_true")
    p.add_argument("--no-adaptive", action="store_true")
    p.add_argument("--no-recycle", action="store_true")
    p.add_argument("--recycle-rule", choices=[r.value for r in RecycleRule],
                   default="half-smallest")
    p.add_argument("--nano-search", choices=[s.value for s in NanoSearch],
                   default="alg1")


def _add_input_flags(p):
    p.add_argument("--in", dest="inp", help="input tensor (.npy/.safetensors/raw)")
    p.add_argument("--tensor-name", help="tensor name inside a safetensors file")
    p.add_argument("--dtype", choices=["f16", "bf16", "f32"],
                   help="dtype of raw input / dequantized output")
    p.add_argument("--shape", help="comma-separated shape for raw input")
    p.add_argument("--synth", choices=list(ingest.SYNTH_MODELS),
                   help="generate a synthetic tensor instead of reading one")
    p.add_argument("--n", type=int, help="element count for --synth")
    p.add_argument("--seed", type=int, help="seed for --synth (required)")


def _cfg_from(args) -> QuantConfig:
    return parse_format_spec(
        args.format, args.block_size,
        no_nano=args.no_nano, no_adaptive=args.no_adaptive,
        no_recycle=args.no_recycle, recycle_rule=args.recycle_rule,
        nano_search=args.nano_search)


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(d) for d in text.split(","))
    except ValueError:
        raise UsageError(f"bad --shape {text!r}") from None
    if not shape or any(d < 1 for d in shape):
        raise UsageError(f"bad --shape {text!r}")
    return shape


def _load_input(args) -> np.ndarray:
    if args.synth:
        if args.n is None or args.seed is None:
            raise UsageError("--synth needs --n and --seed")
        return ingest.synth_weights(args.synth, args.n, args.seed)
    if not args.inp:
        raise UsageError("need --in or --synth")
    path = args.inp
    if path.endswith(".npy"):
        return ingest.load_npy(path)
    if path.endswith(".safetensors"):
        return ingest.load_safetensors(path, args.tensor_name)
    if args.dtype and args.shape:
        return ingest.load_raw(path, args.dtype, _parse_shape(args.shape))
    raise UsageError("raw input needs --dtype and --shape")


def _cmd_quantize(args) -> int:
    cfg = _cfg_from(args)
    values = _load_input(args)
    packed = quant.quantize_tensor(values, cfg)
    nbytes = container.write_file(args.out, packed)
    bpe = container.footprint_bits_per_element(cfg)
    print(f"elements: {packed.logical_len}")
    print(f"blocks: {packed.num_blocks} x {cfg.block_size}")
    print(f"bits/element: {analysis.format_number(bpe)}")
    print(f"payload+scales bits: {container.footprint_bits(packed)}")
    print(f"file bytes: {nbytes}")
    return 0


def _cmd_dequantize(args) -> int:
    packed = container.read_file(args.inp)
    target = dequant.DequantTarget(args.dtype or "f32")
    if target == dequant.DequantTarget.BFLOAT16:
        raise UsageError("npy cannot store bfloat16; use f16 or f32")
    values = dequant.dequantize_tensor(packed, target)
    ingest.save_npy(args.out, values)
    print(f"wrote {values.size} values ({values.dtype}) to {args.out}")
    return 0


def _fmt_name(cfg: QuantConfig) -> str:
    if cfg.microexp_bits == 0:
        return f"bfp{cfg.element_bits}"
    base = "nxfp" if (cfg.nano_enabled or cfg.adaptive_enabled
                      or cfg.recycle_enabled) else "mxfp"
    return f"{base}{cfg.element_bits}-{cfg.element_format}"


def _cmd_inspect(args) -> int:
    packed = container.read_file(args.inp)
    cfg = packed.cfg
    print(f"format: {_fmt_name(cfg)}")
    print(f"shape: {','.join(str(d) for d in packed.shape)}")
    print(f"elements: {packed.logical_len}")
    print(f"blocks: {packed.num_blocks} x {cfg.block_size}")
    print(f"element_bits: {cfg.element_bits}  microexp_bits: {cfg.microexp_bits}")
    print(f"features: nano={int(cfg.nano_enabled)} adaptive={int(cfg.adaptive_enabled)} "
          f"recycle={int(cfg.recycle_enabled)}")
    print(f"bits/element: {analysis.format_number(container.footprint_bits_per_element(cfg))}")

    zero = packed.e_bytes == quant.ZERO_BLOCK_BYTE
    print(f"zero blocks: {int(zero.sum())}")
    if (~zero).any():
        exps = packed.e_bytes[~zero].astype(np.int64) - 127
        print(f"shared_exp: min {exps.min()} max {exps.max()} "
              f"mean {analysis.format_number(exps.mean())}")
    counts = np.bincount(packed.nano_codes, minlength=4)
    print("nano codes: " + " ".join(f"{m}:{int(counts[m])}" for m in range(4)))
    frac = float(np.mean(packed.fmt_bits == 0))
    print(f"bfp blocks: {analysis.format_number(frac)}")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _cfg_from(args)
    values = _load_input(args)
    report = analysis.ablation_sweep(values, cfg.element_bits, cfg.block_size,
                                     cfg.microexp_bits)
    rows = []
    for name in analysis.FEATURE_SETS:
        m = report.sets[name]
        rows.append((name, m.mse, m.l1, m.max_abs, report.bfp_fraction[name],
                     report.reduction_vs(name)))
    analysis.write_csv(args.out,
                       ["feature_set", "mse", "l1", "max_abs",
                        "bfp_block_fraction", "mse_reduction_vs_mxfp"],
                       rows)
    hist = analysis.profile_scaled_distribution(values, cfg)
    hist_path = _hist_path(args.out)
    analysis.write_csv(hist_path, ["bin_left", "bin_right", "count"],
                       analysis.histogram_rows(hist))
    print(f"wrote {args.out} and {hist_path}")
    print(f"outlier_fraction: {analysis.format_number(hist.outlier_fraction)}")
    print(f"vacant_fraction: {analysis.format_number(hist.vacant_fraction)}")
    return 0


def _hist_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}.hist{ext or '.csv'}"


def _cmd_sweep(args) -> int:
    cfg = _cfg_from(args)
    values = _load_input(args)
    kind = args.sweep
    if kind == "ablation":
        return _cmd_analyze(args)
    if kind == "block-size":
        rows = analysis.block_size_sweep(values, cfg.element_bits)
        analysis.write_csv(args.out,
                           ["block_size", "format", "bits_per_element", "mse"],
                           rows)
    elif kind == "recycled-value":
        cfg_r = cfg if cfg.recycle_enabled else QuantConfig(
            block_size=cfg.block_size, element_bits=cfg.element_bits,
            microexp_bits=cfg.microexp_bits, nano_enabled=cfg.nano_enabled,
            adaptive_enabled=cfg.adaptive_enabled, recycle_enabled=True,
            recycle_rule=cfg.recycle_rule, nano_search=cfg.nano_search)
        rows = analysis.recycled_value_sweep(values, cfg_r)
        analysis.write_csv(args.out, ["remap_value", "mse"], rows)
    elif kind == "microexp":
        rows = analysis.microexp_config_sweep(values, cfg.element_bits,
                                              cfg.block_size)
        analysis.write_csv(args.out, ["microexp_bits", "mse"], rows)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown sweep {kind!r}")
    print(f"wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    values = _load_input(args)
    rows = []
    for spec in args.format.split(","):
        cfg = parse_format_spec(
            spec, args.block_size,
            no_nano=args.no_nano, no_adaptive=args.no_adaptive,
            no_recycle=args.no_recycle, recycle_rule=args.recycle_rule,
            nano_search=args.nano_search)
        metrics, _, bfp_frac = analysis.error_stats(values, cfg)
        rows.append((spec.strip(),
                     container.footprint_bits_per_element(cfg),
                     metrics.mse, metrics.l1, metrics.max_abs, bfp_frac))
    analysis.write_csv(args.out,
                       ["format", "bits_per_element", "mse", "l1", "max_abs",
                        "bfp_block_fraction"],
                       rows)
    print(f"wrote {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="nxfp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a tensor to a .nxt file")
    _add_format_flags(p)
    _add_input_flags(p)
    p.add_argument("--out", required=True, help="output .nxt path")
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("dequantize", help="decode a .nxt file to .npy")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dtype", choices=["f16", "f32"], default="f32")
    p.set_defaults(func=_cmd_dequantize)

    p = sub.add_parser("inspect", help="print header and per-block scale stats")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("analyze", help="error report CSV + scaled histogram CSV")
    _add_format_flags(p)
    _add_input_flags(p)
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("sweep", help="run one sweep to CSV")
    p.add_argument("--sweep", required=True,
                   choices=["ablation", "block-size", "recycled-value", "microexp"])
    _add_format_flags(p)
    _add_input_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="one CSV row per format spec")
    _add_format_flags(p)
    _add_input_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    return parser


def _apply_thread_cap() -> None:
    cap = os.environ.get("NXFP_THREADS", "").strip()
    if not cap or _kernels.backend_name() != "numba":
        return
    try:
        import warnings

        import numba
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # threading-layer probe chatter
            numba.set_num_threads(max(1, min(int(cap), numba.get_num_threads())))
    except (ImportError, ValueError):
        pass


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_thread_cap()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ContainerError, IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NxfpError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
