"""Roofline model: arithmetic intensity, attainable throughput, regimes.

Units are decimal: GB = 1e9 bytes, GFLOP = 1e9 operations.  For ternary
kernels an "operation" is one elementwise masked add or subtract.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable

from .errors import DimensionError
from .kernels import OpCounts

KINDS = ("fp32_dense", "ternary_single", "ternary_fused")
MODES = ("exact", "asymptotic")
ASYMPTOTIC_AI = {"fp32_dense": 0.25, "ternary_single": 4.0, "ternary_fused": 8.0}

# fraction of the ridge point above which a memory-bound kernel is "near" it
NEAR_RIDGE_FRACTION = 0.5


@dataclass(frozen=True)
class PlatformSpec:
    name: str
    peak_bandwidth: float  # GB/s
    peak_compute: float  # GFLOP/s or GOP/s

    def __post_init__(self):
        for label, v in (("peak_bandwidth", self.peak_bandwidth), ("peak_compute", self.peak_compute)):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{label} must be positive and finite, got {v}")

    @property
    def ridge(self) -> float:
        return self.peak_compute / self.peak_bandwidth


PLATFORMS = {
    "cpu-8558p": PlatformSpec("cpu-8558p", 200.0, 2700.0),
    "gpu-h200": PlatformSpec("gpu-h200", 4800.0, 134000.0),
}


def platform(name: str, bandwidth: float | None = None, peak: float | None = None) -> PlatformSpec:
    """Look up a preset, or build ``custom`` from explicit bandwidth/peak."""
    if name == "custom":
        if bandwidth is None or peak is None:
            raise ValueError("custom platform needs both bandwidth and peak")
        return PlatformSpec("custom", float(bandwidth), float(peak))
    try:
        return PLATFORMS[name]
    except KeyError:
        raise ValueError(f"unknown platform {name!r}; choose from {sorted(PLATFORMS) + ['custom']}") from None


@dataclass(frozen=True)
class KernelProfile:
    kind: str
    n: int
    m: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {KINDS}")
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"n and m must be >= 1, got n={self.n}, m={self.m}")

    def ops(self) -> float:
        return (8 if self.kind == "ternary_fused" else 1) * self.n * self.m

    def bytes_moved(self) -> float:
        n, m = self.n, self.m
        if self.kind == "fp32_dense":
            return 4 * n * m + 4 * m + 4 * n
        if self.kind == "ternary_single":
            return n * m / 4 + 4 * m + 4 * n
        # four packed matrices, three activation vectors, two outputs
        return n * m + 12 * m + 8 * n


def arithmetic_intensity(profile: KernelProfile, mode: str = "exact") -> float:
    if mode == "asymptotic":
        return ASYMPTOTIC_AI[profile.kind]
    if mode == "exact":
        return profile.ops() / profile.bytes_moved()
    raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


@dataclass(frozen=True)
class Attainable:
    gops: float
    regime: str
    ridge: float
    near_ridge: bool


def attainable(spec: PlatformSpec, ai: float) -> Attainable:
    """``min(peak, ai * bandwidth)`` with the regime at that intensity."""
    if not ai > 0:
        raise ValueError(f"arithmetic intensity must be positive, got {ai}")
    bw_bound = ai * spec.peak_bandwidth
    memory_bound = bw_bound < spec.peak_compute
    return Attainable(
        gops=min(spec.peak_compute, bw_bound),
        regime="memory-bound" if memory_bound else "compute-bound",
        ridge=spec.ridge,
        near_ridge=memory_bound and ai >= NEAR_RIDGE_FRACTION * spec.ridge,
    )


def op_count_model(n: int, m: int) -> OpCounts:
    """Analytic op counts of the fused widely-linear kernel.

    Per row: m/16 chunks, four words per chunk, each decoded once (two mask
    extractions) and driving two masked add/sub pairs.  Lane-level counts
    depend on the weights, so ``masked_adds``/``masked_subs`` are None.
    """
    if n < 1 or m < 1:
        raise DimensionError(f"n and m must be >= 1, got n={n}, m={m}")
    if m % 16:
        raise DimensionError(f"m={m} is not a multiple of 16")
    words = 4 * n * (m // 16)
    return OpCounts(
        decodes=2 * words,
        add_instructions=2 * words,
        sub_instructions=2 * words,
        addsub_slots=8 * n * m,
        masked_adds=None,
        masked_subs=None,
        inner_multiplies=0,
        scale_multiplies=8 * n,
    )


# -- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class RooflineRow:
    platform: str
    kernel: str
    n: int
    m: int
    mode: str
    ai: float
    ridge: float
    attainable_gops: float
    regime: str
    near_ridge: bool


def roofline_rows(specs: Iterable[PlatformSpec], kinds: Iterable[str], n: int, m: int,
                  modes: Iterable[str] = MODES) -> list[RooflineRow]:
    rows = []
    kinds = list(kinds)
    modes = list(modes)
    for spec in specs:
        for kind in kinds:
            prof = KernelProfile(kind, n, m)
            for mode in modes:
                ai = arithmetic_intensity(prof, mode)
                att = attainable(spec, ai)
                rows.append(RooflineRow(spec.name, kind, n, m, mode, ai, att.ridge, att.gops, att.regime, att.near_ridge))
    return rows


def rows_to_csv(rows: Iterable) -> str:
    rows = [asdict(r) for r in rows]
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def rows_to_json(rows: Iterable) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)
