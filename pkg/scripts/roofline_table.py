#!/usr/bin/env python3
"""Roofline table for both preset platforms and an optional measured point.

With ``--measure`` the fused kernel is timed on this host and its achieved
GOP/s (8nm elementwise ops per call) is printed next to the model.
"""

from __future__ import annotations

import argparse
import sys

from ternfuse.bench import BenchConfig, kernel_workload, run_bench
from ternfuse.roofline import KINDS, PLATFORMS, roofline_rows, rows_to_csv


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--m", type=int, default=4096)
    p.add_argument("--measure", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    rows = roofline_rows(PLATFORMS.values(), KINDS, args.n, args.m)
    sys.stdout.write(rows_to_csv(rows))
    if args.measure:
        make, fp = kernel_workload("fused", args.n, args.m, workers=args.threads)
        med = run_bench(make, BenchConfig(5, 50, workers=args.threads), footprint=fp).aggregate.median_us
        gops = 8 * args.n * args.m / (med * 1e3)
        gbs = fp / (med * 1e3)
        print(f"\nmeasured fused {args.n}x{args.m}, {args.threads} thread(s): {med:.1f} us, "
              f"{gops:.1f} GOP/s, {gbs:.1f} GB/s effective")


if __name__ == "__main__":
    main()
