"""Micro-benchmark harness: warmup, timed iterations, seeds, CV.

Per seed the harness builds the workload, runs ``warmup_iters`` untimed
calls, then ``timed_iters`` timed calls and keeps their median.  The
aggregate row summarises the per-seed medians (mean, std, CV).

Frequency pinning, governor settings and NUMA binding are operator
procedures, e.g. ``cpupower frequency-set -g performance`` and
``numactl --cpunodebind=0 --membind=0``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllocationFailure, ClockUnavailable, EmptySamples

CACHE_MODES = ("l3_warm", "dram_cold")
FLUSH_FLOOR_BYTES = 256 * 1024 * 1024
DEFAULT_CV_THRESHOLD = 5.0

Clock = Callable[[], int]  # nanoseconds, monotonic


@dataclass(frozen=True)
class BenchConfig:
    warmup_iters: int = 10
    timed_iters: int = 1000
    seeds: tuple[int, ...] = (42, 123, 2026)
    cache_mode: str = "l3_warm"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.timed_iters < 1:
            raise ValueError(f"timed_iters must be >= 1, got {self.timed_iters}")
        if self.warmup_iters < 0:
            raise ValueError(f"warmup_iters must be >= 0, got {self.warmup_iters}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.cache_mode not in CACHE_MODES:
            raise ValueError(f"cache_mode must be one of {CACHE_MODES}, got {self.cache_mode!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class BenchStats:
    median_us: float
    mean_us: float
    std_us: float
    cv_percent: float
    count: int = 1


def compute_stats(samples: Sequence[float], ddof: int = 1) -> BenchStats:
    """Median (lower-middle for even counts), mean, std and CV of ``samples``.

    ``ddof=1`` gives the sample standard deviation, ``ddof=0`` the population
    one.  A single sample has std 0 regardless of ``ddof``.
    """
    a = np.asarray(samples, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptySamples("no samples to summarise")
    s = np.sort(a)
    median = float(s[(a.size - 1) // 2])
    mean = float(a.mean())
    std = float(a.std(ddof=ddof)) if a.size > ddof else 0.0
    cv = 100.0 * std / mean if mean > 0 else 0.0
    return BenchStats(median, mean, std, cv, int(a.size))


# -- clocks and cache flushing ----------------------------------------------

def default_clock() -> Clock:
    info = time.get_clock_info("perf_counter")
    if not info.monotonic:
        raise ClockUnavailable("perf_counter is not monotonic on this platform")
    return time.perf_counter_ns


def timer_overhead_ns(clock: Clock, reps: int = 1000) -> float:
    """Median cost of one back-to-back clock read pair."""
    deltas = np.empty(reps)
    for k in range(reps):
        t0 = clock()
        deltas[k] = clock() - t0
    return float(np.median(deltas))


_flush_buf: Optional[np.ndarray] = None


def flush_cache(footprint: int) -> int:
    """Stream a scratch buffer of ``max(2 * footprint, 256 MiB)`` read-modify-write.

    Best effort: evicts a working set of ``footprint`` bytes from the cache
    hierarchy with high probability but offers no architectural guarantee.
    Returns the number of bytes streamed.
    """
    global _flush_buf
    if footprint <= 0:
        raise ValueError(f"footprint must be positive, got {footprint}")
    size = max(2 * int(footprint), FLUSH_FLOOR_BYTES)
    words = size // 8
    if _flush_buf is None or _flush_buf.size < words:
        try:
            _flush_buf = np.ones(words, dtype=np.int64)
        except MemoryError as exc:
            raise AllocationFailure(f"cannot allocate {size} byte flush buffer") from exc
    view = _flush_buf[:words]
    np.add(view, 1, out=view)
    return words * 8


# -- harness -------------------------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    stats: BenchStats
    samples_us: np.ndarray = field(repr=False)


@dataclass
class BenchResult:
    per_seed: list[SeedResult]
    aggregate: BenchStats
    timer_overhead_ns: float
    overhead_subtracted: bool

    def cv_ok(self, threshold: float = DEFAULT_CV_THRESHOLD) -> bool:
        return self.aggregate.cv_percent <= threshold


def run_bench(make_workload: Callable[[int], Callable[[], object]], config: BenchConfig, *,
              footprint: int = 0, clock: Optional[Clock] = None,
              flush: Callable[[int], object] = flush_cache, ddof: int = 1) -> BenchResult:
    """Time ``make_workload(seed)()`` under ``config``.

    Only the workload call sits between the two clock reads, so warmup and
    flushing never reach the samples.  If the calibrated clock overhead
    exceeds 1% of a seed's raw median it is subtracted from every sample.
    """
    clock = clock or default_clock()
    overhead = timer_overhead_ns(clock, reps=min(1000, max(10, config.timed_iters)))
    cold = config.cache_mode == "dram_cold"
    flush_bytes = max(int(footprint), 1)
    per_seed = []
    subtracted = False
    for seed in config.seeds:
        work = make_workload(seed)
        for _ in range(config.warmup_iters):
            work()
        ns = np.empty(config.timed_iters, dtype=np.float64)
        for k in range(config.timed_iters):
            if cold:
                flush(flush_bytes)
            t0 = clock()
            work()
            ns[k] = clock() - t0
        raw_median = float(np.sort(ns)[(ns.size - 1) // 2])
        if overhead > 0.01 * raw_median:
            ns = np.maximum(ns - overhead, 0.0)
            subtracted = True
        us = ns / 1e3
        per_seed.append(SeedResult(seed, compute_stats(us, ddof=ddof), us))
    aggregate = compute_stats([r.stats.median_us for r in per_seed], ddof=ddof)
    return BenchResult(per_seed, aggregate, overhead, subtracted)


# -- standard workloads --------------------------------------------------------

WORKLOAD_KINDS = ("dense", "ternary", "fused", "unfused")


def kernel_workload(kind: str, n: int, m: int, *, workers: int = 1, variant: str = "unrolled",
                    backend: str = "auto") -> tuple[Callable[[int], Callable[[], object]], int]:
    """Return ``(make_workload, footprint_bytes)`` for one of the GEMV kernels."""
    from . import kernels
    from .synth import random_activations, random_layer, random_packed, rng_for

    if kind not in WORKLOAD_KINDS:
        raise ValueError(f"unknown workload kind {kind!r}; choose from {WORKLOAD_KINDS}")
    mp = -(-m // 16) * 16
    if kind == "dense":
        footprint = 4 * n * m + 4 * m + 4 * n
    elif kind == "ternary":
        footprint = n * mp // 4 + 4 * mp + 4 * n
    else:
        footprint = n * mp + 12 * mp + 8 * n

    def make(seed: int):
        if kind == "dense":
            rng = rng_for(seed)
            a = rng.integers(-1, 2, size=(n, m)).astype(np.float32)
            x = rng.uniform(-1, 1, size=m).astype(np.float32)
            return lambda: kernels.dense_gemv_f32(a, x, backend=backend, workers=workers)
        if kind == "ternary":
            rng = rng_for(seed)
            a = random_packed(rng, n, m)
            x = random_activations(m, seed + 1, m_padded=a.m_padded).x_re
            return lambda: kernels.ternary_gemv(a, x, variant=variant, backend=backend, workers=workers)
        layer = random_layer(n, m, seed)
        x = random_activations(m, seed + 1, m_padded=layer.m_padded)
        fn = kernels.fused_widely_linear if kind == "fused" else kernels.unfused_widely_linear
        return lambda: fn(layer, x, variant=variant, backend=backend, workers=workers)

    return make, footprint


# -- output --------------------------------------------------------------------

COLUMNS = ("workload", "n", "m", "kind", "cache_mode", "workers", "seed",
           "median_us", "mean_us", "std_us", "cv_percent")


def result_rows(result: BenchResult, *, workload: str, n: int, m: int, kind: str,
                config: BenchConfig) -> list[dict]:
    """One row per seed plus an ``aggregate`` row over the per-seed medians."""
    base = dict(workload=workload, n=n, m=m, kind=kind, cache_mode=config.cache_mode, workers=config.workers)
    rows = []
    for r in result.per_seed:
        rows.append({**base, "seed": r.seed, **_stat_cols(r.stats)})
    rows.append({**base, "seed": "aggregate", **_stat_cols(result.aggregate)})
    return rows


def _stat_cols(s: BenchStats) -> dict:
    d = asdict(s)
    d.pop("count")
    return d


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def rows_to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2)


def rows_to_table(rows: list[dict]) -> str:
    head = f"{'seed':>10} {'median_us':>12} {'mean_us':>12} {'std_us':>10} {'cv_%':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{str(r['seed']):>10} {r['median_us']:12.2f} {r['mean_us']:12.2f} "
                     f"{r['std_us']:10.2f} {r['cv_percent']:7.2f}")
    return "\n".join(lines)
