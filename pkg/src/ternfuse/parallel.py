"""Static row partitioning and thread-parallel execution of row kernels.

Each worker owns one contiguous half-open row range and writes only that
slice of the output; the join at the end is the single synchronisation
point.  Row kernels release the GIL (ctypes calls, ``nogil`` numba), so a
plain thread pool gives real parallelism.

NUMA placement is left to the operator, e.g.
``numactl --cpunodebind=0 --membind=0 ternfuse bench ...``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable


@dataclass(frozen=True)
class RowPartition:
    ranges: tuple[tuple[int, int], ...]

    @property
    def sizes(self) -> list[int]:
        return [hi - lo for lo, hi in self.ranges]

    def __iter__(self):
        return iter(self.ranges)

    def __len__(self) -> int:
        return len(self.ranges)


def partition_rows(n: int, t: int) -> RowPartition:
    """Split ``[0, n)`` into ``t`` balanced contiguous ranges.

    The first ``n % t`` ranges get one extra row; trailing ranges may be
    empty when ``t > n``.
    """
    if n < 0 or t < 1:
        raise ValueError(f"need n >= 0 and t >= 1, got n={n}, t={t}")
    base, extra = divmod(n, t)
    ranges = []
    lo = 0
    for k in range(t):
        hi = lo + base + (1 if k < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return RowPartition(tuple(ranges))


def _sysfs_socket_cores() -> int | None:
    # physical cores on the socket of cpu0, from Linux topology files
    root = "/sys/devices/system/cpu"
    try:
        allowed = os.sched_getaffinity(0)
    except AttributeError:
        allowed = set(range(os.cpu_count() or 1))
    cores = set()
    package0 = None
    for cpu in sorted(allowed):
        topo = f"{root}/cpu{cpu}/topology"
        try:
            with open(f"{topo}/physical_package_id") as fh:
                pkg = fh.read().strip()
            with open(f"{topo}/core_id") as fh:
                core = fh.read().strip()
        except OSError:
            return None
        if package0 is None:
            package0 = pkg
        if pkg == package0:
            cores.add(core)
    return len(cores) or None


@lru_cache(maxsize=1)
def default_workers() -> int:
    """Physical cores of one socket when detectable, else usable logical CPUs."""
    n = _sysfs_socket_cores()
    if n:
        return n
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


_pools: dict[int, ThreadPoolExecutor] = {}


def _pool(workers: int) -> ThreadPoolExecutor:
    pool = _pools.get(workers)
    if pool is None:
        pool = _pools[workers] = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="ternfuse")
    return pool


def run_partitioned(n: int, workers: int, fn: Callable[[int, int], None]) -> RowPartition:
    """Call ``fn(r0, r1)`` for each non-empty range of ``partition_rows(n, workers)``.

    With one worker the call runs inline.  Returns the partition used.
    """
    part = partition_rows(n, workers)
    jobs = [(lo, hi) for lo, hi in part if hi > lo]
    if workers == 1 or len(jobs) <= 1:
        for lo, hi in jobs:
            fn(lo, hi)
        return part
    futures = [_pool(workers).submit(fn, lo, hi) for lo, hi in jobs]
    for f in futures:
        f.result()
    return part


def parallel_fused(layer, x, t: int | None = None, **kwargs):
    """Fused widely-linear GEMV with rows split across ``t`` workers.

    Bitwise identical to the single-worker result for any ``t``: each row's
    accumulation order is fixed and rows never interact.
    """
    from .kernels import fused_widely_linear

    return fused_widely_linear(layer, x, workers=t or default_workers(), **kwargs)


def parallel_ternary_gemv(a, x, scale: float = 1.0, t: int | None = None, **kwargs):
    from .kernels import ternary_gemv

    return ternary_gemv(a, x, scale, workers=t or default_workers(), **kwargs)
