#!/usr/bin/env python3
"""Ternary vs FP32 dense GEMV latency across the standard layer shapes.

Reports per-shape median latency (cross-seed aggregate) for the FP32 dense
baseline and the ternary single GEMV in each variant, plus speedups.
"""

from __future__ import annotations

import argparse
import csv
import sys

from ternfuse.bench import BenchConfig, kernel_workload, run_bench
from ternfuse.kernels import backend_name

SHAPES = [(4096, 4096), (11008, 4096), (4096, 11008)]


def median_us(kind, n, m, cfg, variant="unrolled"):
    make, footprint = kernel_workload(kind, n, m, workers=cfg.workers, variant=variant)
    return run_bench(make, cfg, footprint=footprint).aggregate.median_us


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--cache-mode", choices=("l3_warm", "dram_cold"), default="l3_warm")
    p.add_argument("--shapes", default=",".join(f"{n}x{m}" for n, m in SHAPES))
    args = p.parse_args(argv)

    cfg = BenchConfig(args.warmup, args.iters, cache_mode=args.cache_mode, workers=args.threads)
    w = csv.writer(sys.stdout)
    w.writerow(["n", "m", "backend", "cache_mode", "workers", "kernel", "median_us", "speedup_vs_dense"])
    for shape in args.shapes.split(","):
        n, m = (int(v) for v in shape.split("x"))
        dense = median_us("dense", n, m, cfg)
        w.writerow([n, m, backend_name(), args.cache_mode, args.threads, "fp32_dense", f"{dense:.1f}", "1.00"])
        for variant in ("reference", "unrolled", "prefetch"):
            t = median_us("ternary", n, m, cfg, variant)
            w.writerow([n, m, backend_name(), args.cache_mode, args.threads, f"ternary_{variant}",
                        f"{t:.1f}", f"{dense / t:.2f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
