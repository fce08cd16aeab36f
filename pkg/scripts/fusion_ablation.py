#!/usr/bin/env python3
"""Fused widely-linear kernel vs eight separate ternary GEMVs.

Emits latency for both paths per variant, together with the instrumented
op counts that explain the gap (decodes halve under fusion; add/sub slots
stay the same).
"""

from __future__ import annotations

import argparse
import csv
import sys

from ternfuse.bench import BenchConfig, kernel_workload, run_bench
from ternfuse.kernels import count_ops
from ternfuse.synth import random_layer


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--m", type=int, default=4096)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--cache-mode", choices=("l3_warm", "dram_cold"), default="dram_cold")
    p.add_argument("--counts-size", type=int, default=256, help="square size for the op-count table")
    args = p.parse_args(argv)

    cfg = BenchConfig(args.warmup, args.iters, cache_mode=args.cache_mode, workers=args.threads)
    w = csv.writer(sys.stdout)
    w.writerow(["variant", "fused_us", "unfused_us", "speedup"])
    for variant in ("reference", "unrolled", "prefetch"):
        res = {}
        for kind in ("fused", "unfused"):
            make, fp = kernel_workload(kind, args.n, args.m, workers=args.threads, variant=variant)
            res[kind] = run_bench(make, cfg, footprint=fp).aggregate.median_us
        w.writerow([variant, f"{res['fused']:.1f}", f"{res['unfused']:.1f}", f"{res['unfused'] / res['fused']:.2f}"])
        sys.stdout.flush()

    layer = random_layer(args.counts_size, args.counts_size, 0)
    print()
    w.writerow(["path", "decodes", "add_instructions", "addsub_slots", "inner_multiplies", "scale_multiplies"])
    for kind in ("fused", "unfused"):
        c = count_ops(layer, kind)
        w.writerow([kind, c.decodes, c.add_instructions, c.addsub_slots, c.inner_multiplies, c.scale_multiplies])


if __name__ == "__main__":
    main()
