#!/usr/bin/env python3
"""Fused kernel latency vs worker count, with a bitwise-equality check per point."""

from __future__ import annotations

import argparse
import csv
import sys

from ternfuse.bench import BenchConfig, kernel_workload, run_bench
from ternfuse.kernels import fused_widely_linear
from ternfuse.parallel import default_workers
from ternfuse.synth import random_activations, random_layer


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--m", type=int, default=4096)
    p.add_argument("--threads", default="1,2,4,8,16")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--cache-mode", choices=("l3_warm", "dram_cold"), default="l3_warm")
    args = p.parse_args(argv)

    layer = random_layer(args.n, args.m, 0)
    x = random_activations(args.m, 1, m_padded=layer.m_padded)
    ref = fused_widely_linear(layer, x, variant="unrolled")
    w = csv.writer(sys.stdout)
    w.writerow(["threads", "median_us", "speedup_vs_1", "bitwise_equal", "host_default_workers"])
    base = None
    for t in (int(v) for v in args.threads.split(",")):
        out = fused_widely_linear(layer, x, variant="unrolled", workers=t)
        same = out.y_re.tobytes() == ref.y_re.tobytes() and out.y_im.tobytes() == ref.y_im.tobytes()
        make, fp = kernel_workload("fused", args.n, args.m, workers=t)
        cfg = BenchConfig(5, args.iters, cache_mode=args.cache_mode, workers=t)
        med = run_bench(make, cfg, footprint=fp).aggregate.median_us
        base = base or med
        w.writerow([t, f"{med:.1f}", f"{base / med:.2f}", same, default_workers()])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
