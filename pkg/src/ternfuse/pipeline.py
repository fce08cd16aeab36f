"""Single-token transformer block built on the fused widely-linear kernel.

Stage order::

    rmsnorm -> qkv -> attention (identity) -> o -> residual
            -> rmsnorm -> gate_up -> silu(gate) * up -> down -> residual

Attention over a single token with an empty history returns the value
projection unchanged, so the attention stage is a slice of the qkv output.
Activations are complex pairs; norms, SiLU and the gating product act on
the real and imaginary components independently.  Real-valued inputs enter
with ``x_im = 0``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .kernels import (ActivationPair, GemvOutput, WidelyLinearLayer, fused_widely_linear,
                      oracle_widely_linear)
from .roofline import op_count_model
from .synth import random_layer, rng_for

DEFAULT_D_MODEL = 4096
DEFAULT_D_FF = 11008


def rmsnorm(x: np.ndarray, gamma: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """``x * gamma / sqrt(mean(x**2) + eps)``, in the dtype of ``x``."""
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    if x.shape != gamma.shape or x.ndim != 1:
        raise DimensionMismatch(f"x {x.shape} and gamma {gamma.shape} must be equal-length vectors")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    dt = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float32
    x = x.astype(dt, copy=False)
    inv = dt.type(1.0) / np.sqrt(np.mean(x * x, dtype=dt) + dt.type(eps))
    return (x * inv * gamma.astype(dt, copy=False)).astype(dt, copy=False)


def silu(x: np.ndarray) -> np.ndarray:
    """``x / (1 + exp(-x))`` elementwise, overflow-safe."""
    x = np.asarray(x)
    dt = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float32
    x = x.astype(dt, copy=False)
    with np.errstate(over="ignore"):
        return (x / (dt.type(1.0) + np.exp(-x))).astype(dt, copy=False)


@dataclass(frozen=True, eq=False)
class BlockWeights:
    qkv: WidelyLinearLayer  # (3 * d_model) x d_model
    o: WidelyLinearLayer  # d_model x d_model
    gate_up: WidelyLinearLayer  # (2 * d_ff) x d_model
    down: WidelyLinearLayer  # d_model x d_ff
    rms_gamma_attn: np.ndarray
    rms_gamma_mlp: np.ndarray

    def __post_init__(self):
        d = self.o.n
        f = self.down.m_logical
        expect = {
            "qkv": (self.qkv, 3 * d, d),
            "o": (self.o, d, d),
            "gate_up": (self.gate_up, 2 * f, d),
            "down": (self.down, d, f),
        }
        for name, (layer, n, m) in expect.items():
            if (layer.n, layer.m_logical) != (n, m):
                raise DimensionMismatch(f"{name} is {layer.n}x{layer.m_logical}, expected {n}x{m}")
        for name in ("rms_gamma_attn", "rms_gamma_mlp"):
            g = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if g.shape != (d,):
                raise DimensionMismatch(f"{name} has shape {g.shape}, expected ({d},)")
            object.__setattr__(self, name, g)

    @property
    def d_model(self) -> int:
        return self.o.n

    @property
    def d_ff(self) -> int:
        return self.down.m_logical

    @property
    def layers(self) -> dict[str, WidelyLinearLayer]:
        return {"qkv": self.qkv, "o": self.o, "gate_up": self.gate_up, "down": self.down}


def random_block(d_model: int = DEFAULT_D_MODEL, d_ff: int = DEFAULT_D_FF, seed: int = 0) -> BlockWeights:
    rng = rng_for(seed)
    sub = rng.integers(0, 2**31, size=5)
    return BlockWeights(
        qkv=random_layer(3 * d_model, d_model, int(sub[0])),
        o=random_layer(d_model, d_model, int(sub[1])),
        gate_up=random_layer(2 * d_ff, d_model, int(sub[2])),
        down=random_layer(d_model, d_ff, int(sub[3])),
        rms_gamma_attn=np.ones(d_model, dtype=np.float32),
        rms_gamma_mlp=np.ones(d_model, dtype=np.float32),
    )


@dataclass(frozen=True)
class BreakdownRow:
    operation: str
    elapsed_us: float
    fraction: float  # percent of block time
    mul_free: bool


# -- forward pass ------------------------------------------------------------------

def _fused_gemv(workers: int, variant: str, backend: str):
    def run(layer: WidelyLinearLayer, re: np.ndarray, im: np.ndarray):
        x = ActivationPair.from_logical(re, im, layer.m_padded)
        out = fused_widely_linear(layer, x, variant=variant, backend=backend, workers=workers)
        return out.y_re, out.y_im
    return run


def _oracle_gemv():
    dense: dict[int, tuple] = {}

    def run(layer: WidelyLinearLayer, re: np.ndarray, im: np.ndarray):
        if id(layer) not in dense:
            dense[id(layer)] = layer.dense()
        mats = dense[id(layer)]
        # the oracle reads activations as float32; feed it the float64 values split
        # into hi + lo float32 parts so no precision is lost on entry
        ys = []
        for part in _split64(re, im):
            out: GemvOutput = oracle_widely_linear(*mats, layer.scales, part)
            ys.append((out.y_re, out.y_im))
        return sum(y[0] for y in ys), sum(y[1] for y in ys)
    return run


def _split64(re: np.ndarray, im: np.ndarray):
    re = np.asarray(re, dtype=np.float64)
    im = np.asarray(im, dtype=np.float64)
    hi_re, hi_im = re.astype(np.float32), im.astype(np.float32)
    lo_re = (re - hi_re).astype(np.float32)
    lo_im = (im - hi_im).astype(np.float32)
    return ActivationPair(hi_re, hi_im), ActivationPair(lo_re, lo_im)


def block_forward(weights: BlockWeights, x: ActivationPair, workers: int = 1, *, kernels: str = "fused",
                  variant: str = "unrolled", backend: str = "auto",
                  clock: Callable[[], int] = time.perf_counter_ns):
    """Run one block on a single token; returns ``(ActivationPair, [BreakdownRow])``.

    ``kernels="fused"`` uses the production float32 path.  ``"oracle"`` runs
    every stage in binary64 with the dense oracle (small dims only); its
    result is rounded to float32 only when packed into the returned pair.
    """
    d, f = weights.d_model, weights.d_ff
    if kernels == "fused":
        gemv, dt = _fused_gemv(workers, variant, backend), np.float32
    elif kernels == "oracle":
        gemv, dt = _oracle_gemv(), np.float64
    else:
        raise ValueError(f"kernels must be 'fused' or 'oracle', got {kernels!r}")
    if np.any(x.x_re[d:]) or np.any(x.x_im[d:]) or len(x) < d:
        raise DimensionMismatch(f"activations of length {len(x)} do not match d_model={d}")

    x_re = x.x_re[:d].astype(dt)
    x_im = x.x_im[:d].astype(dt)
    timings: list[tuple[str, int, bool]] = []

    def stage(name, mul_free, fn, *args):
        t0 = clock()
        out = fn(*args)
        timings.append((name, clock() - t0, mul_free))
        return out

    def norm(re, im, gamma):
        g = gamma.astype(dt)
        return rmsnorm(re, g), rmsnorm(im, g)

    def residual(a_re, a_im, b_re, b_im):
        return (a_re + b_re).astype(dt), (a_im + b_im).astype(dt)

    def gate(gu_re, gu_im):
        return ((silu(gu_re[:f].astype(dt)) * gu_re[f:]).astype(dt),
                (silu(gu_im[:f].astype(dt)) * gu_im[f:]).astype(dt))

    h = stage("rmsnorm_attn", False, norm, x_re, x_im, weights.rms_gamma_attn)
    qkv = stage("qkv_proj", True, gemv, weights.qkv, *h)
    v = stage("attention_identity", True, lambda re, im: (re[2 * d:3 * d], im[2 * d:3 * d]), *qkv)
    o = stage("o_proj", True, gemv, weights.o, *v)
    x1 = stage("residual_attn", True, residual, x_re, x_im, *o)
    h2 = stage("rmsnorm_mlp", False, norm, *x1, weights.rms_gamma_mlp)
    gu = stage("gate_up_proj", True, gemv, weights.gate_up, *h2)
    a = stage("silu_mul", False, gate, *gu)
    dn = stage("down_proj", True, gemv, weights.down, *a)
    y = stage("residual_mlp", True, residual, *x1, *dn)

    total = sum(ns for _, ns, _ in timings)
    rows = []
    for name, ns, mul_free in timings:
        frac = 100.0 * ns / total if total > 0 else 100.0 / len(timings)
        rows.append(BreakdownRow(name, ns / 1e3, frac, mul_free))
    return ActivationPair(*y), rows


# -- op accounting ------------------------------------------------------------

@dataclass(frozen=True)
class BlockOpCounts:
    gemv_ops: int
    other_ops: int

    @property
    def total(self) -> int:
        return self.gemv_ops + self.other_ops

    @property
    def gemv_share(self) -> float:
        return self.gemv_ops / self.total


def block_op_counts(d_model: int = DEFAULT_D_MODEL, d_ff: int = DEFAULT_D_FF) -> BlockOpCounts:
    """Analytic elementwise arithmetic of one block.

    GEMV stages contribute their masked add/sub slots and scale multiplies.
    Every other stage is tallied generously per component (re and im):
    rmsnorm 4d + 2 (square, sum, scale, gamma, plus sqrt and divide),
    silu-gate 5f (negate, exp, add, divide, gating multiply), residual d.
    """
    d, f = d_model, d_ff
    gemv = 0
    for n, m in ((3 * d, d), (d, d), (2 * f, d), (d, f)):
        c = op_count_model(n, m)
        gemv += c.addsub_slots + c.scale_multiplies
    per_component = 2 * (4 * d + 2) + 5 * f + 2 * d
    return BlockOpCounts(gemv, 2 * per_component)


# -- output ------------------------------------------------------------------

def breakdown_table(rows: list[BreakdownRow]) -> str:
    head = f"{'operation':<20} {'elapsed_us':>12} {'fraction_%':>11} {'mul_free':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.operation:<20} {r.elapsed_us:12.1f} {r.fraction:11.2f} {str(r.mul_free):>9}")
    lines.append(f"{'total':<20} {sum(r.elapsed_us for r in rows):12.1f} {sum(r.fraction for r in rows):11.2f}")
    return "\n".join(lines)


def breakdown_csv(rows: list[BreakdownRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["operation", "elapsed_us", "fraction", "mul_free"], lineterminator="\n")
    w.writeheader()
    w.writerows(asdict(r) for r in rows)
    return buf.getvalue()
