#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times quantize / dequantize / pack round trips on a synthetic tensor with
both backends and checks that the outputs agree byte for byte.

    python benchmarks/bench_backends.py --n 1048576 --format nxfp4 --repeats 5
"""

import argparse
import time

from nxfp import _kernels
from nxfp.cli import parse_format_spec
from nxfp.container import serialize
from nxfp.dequant import dequantize_tensor
from nxfp.ingest import synth_weights
from nxfp.quant import quantize_tensor


def time_best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(backend, values, cfg, repeats):
    _kernels.use(backend)
    # warm-up (jit compilation on the numba path)
    quantize_tensor(values[: 32 * 64], cfg)
    t_q, packed = time_best(lambda: quantize_tensor(values, cfg), repeats)
    t_d, recon = time_best(lambda: dequantize_tensor(packed), repeats)
    return t_q, t_d, serialize(packed), recon


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1 << 20)
    ap.add_argument("--format", default="nxfp4")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    cfg = parse_format_spec(args.format)
    values = synth_weights("gaussian", args.n, args.seed)

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = run(backend, values, cfg, args.repeats)
        except ImportError:
            print(f"{backend:6s}  unavailable")

    print(f"\n{args.format} on {args.n} elements (best of {args.repeats})")
    print(f"{'backend':8s}{'quantize':>12s}{'dequantize':>12s}")
    for backend, (t_q, t_d, _, _) in results.items():
        print(f"{backend:8s}{t_q * 1e3:10.1f}ms{t_d * 1e3:10.1f}ms")

    if len(results) == 2:
        nq = results["numpy"][0] / results["numba"][0]
        nd = results["numpy"][1] / results["numba"][1]
        print(f"numba speedup: quantize x{nq:.1f}, dequantize x{nd:.1f}")
        same_bytes = results["numpy"][2] == results["numba"][2]
        same_values = (results["numpy"][3] == results["numba"][3]).all()
        print(f"outputs identical: bytes={same_bytes} values={same_values}")
        if not (same_bytes and same_values):
            raise SystemExit("backend outputs diverge")


if __name__ == "__main__":
    main()
