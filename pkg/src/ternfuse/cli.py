"""``ternfuse`` command-line entry point.

Exit codes: 0 success, 1 verification or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

KIND_ALIASES = {
    "dense": "fp32_dense", "fp32_dense": "fp32_dense",
    "ternary": "ternary_single", "ternary_single": "ternary_single",
    "fused": "ternary_fused", "ternary_fused": "ternary_fused",
}


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list is empty")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ternfuse", description="Ternary widely-linear GEMV toolkit.")
    p.add_argument("--backend", choices=("auto", "native", "portable"), default="auto",
                   help="kernel backend (default: native when available)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pack", help="write a random ternary layer file")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--m", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("inspect", help="describe a layer file")
    s.add_argument("file")
    s.add_argument("--strict", action="store_true", help="also reject (1,1) slots")

    s = sub.add_parser("verify", help="oracle-equivalence and zero-multiply checks")
    s.add_argument("--sizes", type=_int_list, default=[16, 64, 256])
    s.add_argument("--trials", type=_positive_int, default=20)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("bench", help="time a GEMV kernel")
    s.add_argument("--kind", choices=("dense", "ternary", "fused", "unfused"), default="fused")
    s.add_argument("--n", type=_positive_int, default=4096)
    s.add_argument("--m", type=_positive_int, default=4096)
    s.add_argument("--threads", type=_positive_int, default=1)
    s.add_argument("--cache-mode", choices=("l3-warm", "dram-cold"), default="l3-warm")
    s.add_argument("--iters", type=_positive_int, default=1000)
    s.add_argument("--warmup", type=int, default=10)
    s.add_argument("--seeds", type=_int_list, default=[42, 123, 2026])
    s.add_argument("--variant", choices=("reference", "unrolled", "prefetch"), default="unrolled")
    s.add_argument("--format", choices=("table", "csv", "json"), default="table")
    s.add_argument("--check-cv", type=float, metavar="PCT", default=None,
                   help="exit 1 if the cross-seed CV exceeds PCT percent")

    s = sub.add_parser("roofline", help="arithmetic intensity and attainable throughput")
    s.add_argument("--platform", choices=("cpu-8558p", "gpu-h200", "custom"), default="cpu-8558p")
    s.add_argument("--bw", type=float, help="custom peak bandwidth, GB/s")
    s.add_argument("--peak", type=float, help="custom peak compute, GOP/s")
    s.add_argument("--kind", choices=sorted(KIND_ALIASES), action="append",
                   help="kernel kind (repeatable; default all)")
    s.add_argument("--n", type=_positive_int, default=4096)
    s.add_argument("--m", type=_positive_int, default=4096)
    s.add_argument("--mode", choices=("exact", "asymptotic", "both"), default="both")
    s.add_argument("--format", choices=("table", "csv", "json"), default="table")

    s = sub.add_parser("pipeline", help="run one transformer block and print its breakdown")
    s.add_argument("--d-model", type=_positive_int, default=4096)
    s.add_argument("--d-ff", type=_positive_int, default=11008)
    s.add_argument("--threads", type=_positive_int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--imag", action="store_true", help="random x_im instead of zero")
    s.add_argument("--format", choices=("table", "csv"), default="table")
    return p


# -- subcommands ------------------------------------------------------------------

def cmd_pack(args, out) -> int:
    from .model_io import write_layer
    from .synth import random_layer

    layer = random_layer(args.n, args.m, args.seed, tied_scales=True)
    nbytes = write_layer(layer, args.out)
    print(f"wrote {args.out}: {args.n}x{args.m}, {nbytes} bytes", file=out)
    return 0


def cmd_inspect(args, out) -> int:
    from .core import invalid_slots
    from .model_io import HEADER_BYTES, LayerHeader, read_layer

    with open(args.file, "rb") as fh:
        header = LayerHeader.unpack(fh.read(HEADER_BYTES))
    layer = read_layer(args.file, strict=args.strict)
    size = os.path.getsize(args.file)
    bad = sum(int(invalid_slots(p.words).sum()) for p in layer.matrices)
    print(f"file           {args.file}", file=out)
    print(f"size_bytes     {size}", file=out)
    print(f"dims           {header.n}x{header.m} (n x m)", file=out)
    print(f"m_padded       {layer.m_padded}", file=out)
    print(f"matrix_bytes   {header.matrix_bytes} each, order U_re U_im W_re W_im", file=out)
    print(f"scale_re       {header.scale_re!r} -> s_u_re, s_w_re", file=out)
    print(f"scale_im       {header.scale_im!r} -> s_u_im, s_w_im", file=out)
    print(f"invalid_slots  {bad}", file=out)
    return 0


def verify_suite(sizes: Sequence[int], trials: int, seed: int = 0, backend: str = "auto"):
    """Yield ``(label, ok, detail)`` for each oracle and op-count check."""
    from .kernels import count_ops, fused_widely_linear, oracle_for, output_error, unfused_widely_linear
    from .roofline import op_count_model
    from .synth import random_activations, random_layer

    for size in sizes:
        worst_f = worst_u = worst_fu = 0.0
        for t in range(trials):
            s = seed * 1_000_003 + size * 1009 + t
            layer = random_layer(size, size, s)
            x = random_activations(size, s + 7, m_padded=layer.m_padded)
            ref = oracle_for(layer, x)
            f = fused_widely_linear(layer, x, backend=backend)
            u = unfused_widely_linear(layer, x, backend=backend)
            worst_f = max(worst_f, output_error(f, ref))
            worst_u = max(worst_u, output_error(u, ref))
            worst_fu = max(worst_fu, output_error(f, u))
        yield f"oracle fused {size}x{size}", worst_f <= 1e-4, f"max rel L2 {worst_f:.3e} (tol 1e-4)"
        yield f"oracle unfused {size}x{size}", worst_u <= 1e-4, f"max rel L2 {worst_u:.3e} (tol 1e-4)"
        yield f"fused vs unfused {size}x{size}", worst_fu <= 1e-6, f"max rel L2 {worst_fu:.3e} (tol 1e-6)"

        layer = random_layer(size, size, seed + size)
        counts = count_ops(layer, "fused")
        ok = counts.inner_multiplies == 0
        detail = f"inner multiplies {counts.inner_multiplies}"
        if size % 16 == 0:
            ok = ok and counts.structural() == op_count_model(size, size).structural()
            detail += ", structural counts match the analytic model" if ok else ", analytic model mismatch"
        yield f"zero-multiply {size}x{size}", ok, detail


def cmd_verify(args, out) -> int:
    failures = 0
    for label, ok, detail in verify_suite(args.sizes, args.trials, args.seed, args.backend):
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {label:<28} {detail}", file=out)
    print(f"{'all checks passed' if not failures else f'{failures} check(s) failed'}", file=out)
    return 1 if failures else 0


def cmd_bench(args, out) -> int:
    from . import bench
    from .kernels import backend_name

    cache_mode = args.cache_mode.replace("-", "_")
    config = bench.BenchConfig(args.warmup, args.iters, tuple(args.seeds), cache_mode, args.threads)
    make, footprint = bench.kernel_workload(args.kind, args.n, args.m, workers=args.threads,
                                            variant=args.variant, backend=args.backend)
    result = bench.run_bench(make, config, footprint=footprint)
    workload = f"{args.kind}_{args.variant}_{backend_name(args.backend)}" if args.kind != "dense" else \
        f"dense_{backend_name(args.backend)}"
    rows = bench.result_rows(result, workload=workload, n=args.n, m=args.m, kind=args.kind, config=config)
    if args.format == "csv":
        out.write(bench.rows_to_csv(rows))
    elif args.format == "json":
        print(bench.rows_to_json(rows), file=out)
    else:
        print(f"{workload} {args.n}x{args.m} cache={cache_mode} workers={args.threads} "
              f"iters={args.iters} warmup={args.warmup}", file=out)
        print(bench.rows_to_table(rows), file=out)
        print("per-seed rows report the median of timed iterations; "
              "the aggregate row is mean/std/CV over the per-seed medians", file=out)
    if args.check_cv is not None and not result.cv_ok(args.check_cv):
        print(f"cross-seed CV {result.aggregate.cv_percent:.2f}% exceeds {args.check_cv}%", file=sys.stderr)
        return 1
    return 0


def cmd_roofline(args, out) -> int:
    from . import roofline

    if args.platform == "custom" and (args.bw is None or args.peak is None):
        raise _UsageError("--platform custom needs --bw and --peak")
    spec = roofline.platform(args.platform, args.bw, args.peak)
    kinds = [KIND_ALIASES[k] for k in (args.kind or ["dense", "ternary", "fused"])]
    kinds = list(dict.fromkeys(kinds))
    modes = roofline.MODES if args.mode == "both" else (args.mode,)
    rows = roofline.roofline_rows([spec], kinds, args.n, args.m, modes)
    if args.format == "csv":
        out.write(roofline.rows_to_csv(rows))
    elif args.format == "json":
        print(roofline.rows_to_json(rows), file=out)
    else:
        print(f"platform {spec.name}: bandwidth {spec.peak_bandwidth:g} GB/s, peak {spec.peak_compute:g} GOP/s, "
              f"ridge {spec.ridge:.4g} OP/byte", file=out)
        head = f"{'kernel':<16} {'mode':<11} {'AI':>9} {'ridge':>8} {'attainable':>11} {'regime':<14} near_ridge"
        print(head, file=out)
        print("-" * len(head), file=out)
        for r in rows:
            print(f"{r.kernel:<16} {r.mode:<11} {r.ai:9.5g} {r.ridge:8.4g} {r.attainable_gops:11.6g} "
                  f"{r.regime:<14} {r.near_ridge}", file=out)
    return 0


def cmd_pipeline(args, out) -> int:
    from .pipeline import block_forward, block_op_counts, breakdown_csv, breakdown_table, random_block
    from .synth import random_activations

    weights = random_block(args.d_model, args.d_ff, args.seed)
    x = random_activations(args.d_model, args.seed + 1, imag=args.imag)
    block_forward(weights, x, args.threads, backend=args.backend)  # warm caches and JIT
    y, rows = block_forward(weights, x, args.threads, backend=args.backend)
    if args.format == "csv":
        out.write(breakdown_csv(rows))
        return 0
    counts = block_op_counts(args.d_model, args.d_ff)
    print(f"block d_model={args.d_model} d_ff={args.d_ff} threads={args.threads} "
          f"x_im={'random' if args.imag else 'zero'}", file=out)
    print(breakdown_table(rows), file=out)
    print(f"analytic elementwise-op share of fused GEMVs: {100 * counts.gemv_share:.4f}%", file=out)
    print(f"output norm: {float(np.linalg.norm(np.r_[y.x_re, y.x_im])):.6g}", file=out)
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {
    "pack": cmd_pack,
    "inspect": cmd_inspect,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "roofline": cmd_roofline,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    from .errors import LayerFormatError, TernaryError

    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ternfuse: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, LayerFormatError) as exc:
        print(f"ternfuse: {exc}", file=sys.stderr)
        return 1
    except (TernaryError, ValueError, RuntimeError) as exc:
        print(f"ternfuse: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
