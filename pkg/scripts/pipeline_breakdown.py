#!/usr/bin/env python3
"""Per-stage timing of one transformer block, averaged over repeated calls."""

from __future__ import annotations

import argparse
from collections import defaultdict

from ternfuse.pipeline import BreakdownRow, block_forward, block_op_counts, breakdown_table, random_block
from ternfuse.synth import random_activations


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d-model", type=int, default=4096)
    p.add_argument("--d-ff", type=int, default=11008)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--imag", action="store_true")
    args = p.parse_args(argv)

    weights = random_block(args.d_model, args.d_ff, 0)
    x = random_activations(args.d_model, 1, imag=args.imag)
    block_forward(weights, x, args.threads)
    total = defaultdict(float)
    flags = {}
    for _ in range(args.reps):
        _, rows = block_forward(weights, x, args.threads)
        for r in rows:
            total[r.operation] += r.elapsed_us / args.reps
            flags[r.operation] = r.mul_free
    whole = sum(total.values())
    rows = [BreakdownRow(k, v, 100 * v / whole, flags[k]) for k, v in total.items()]
    print(breakdown_table(rows))
    gemv = sum(r.fraction for r in rows if r.operation.endswith("_proj"))
    print(f"\nfused GEMV stages: {gemv:.1f}% of measured block time")
    print(f"fused GEMV share of elementwise ops: {100 * block_op_counts(args.d_model, args.d_ff).gemv_share:.4f}%")


if __name__ == "__main__":
    main()
