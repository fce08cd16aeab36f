"""GEMV kernels: dense baseline, ternary single, fused and unfused widely-linear.

The widely-linear layer evaluated here is::

    y_re = s_u_re*U_re@x_re - s_u_im*U_im@x_im + s_w_re*W_re@x_re + s_w_im*W_im@x_im
    y_im = s_u_re*U_re@x_im + s_u_im*U_im@x_re + s_w_re*W_re@x_im - s_w_im*W_im@x_re

Every ternary kernel uses masked add/sub only; the single multiplications are
the per-row scale applications after the horizontal sum.

Two backends provide the row kernels: ``"native"`` (AVX-512 + BMI2 through
ctypes) and ``"portable"`` (numba).  ``"auto"`` picks native when it loads.
Three variants exist: ``"reference"`` (one accumulator group, canonical
order), ``"unrolled"`` (independent accumulators for ILP) and ``"prefetch"``
(unrolled plus software prefetch; arithmetic identical to unrolled).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from numba import njit

from . import _portable, native
from .core import PackedTernaryMatrix, ScaleSet, padded_width, unpack_matrix
from .errors import DimensionMismatch
from .parallel import run_partitioned

VARIANTS = {"reference": _portable.REFERENCE, "unrolled": _portable.UNROLLED, "prefetch": _portable.PREFETCH}
BACKENDS = ("auto", "native", "portable")


def resolve_backend(backend: str = "auto"):
    if backend == "auto":
        return native if native.available() else _portable
    if backend == "native":
        if not native.available():
            raise RuntimeError("native backend requested but unavailable (needs x86-64 AVX-512F + BMI2 and a C compiler)")
        return native
    if backend == "portable":
        return _portable
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def backend_name(backend: str = "auto") -> str:
    return "native" if resolve_backend(backend) is native else "portable"


def _variant_code(variant: str) -> int:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}") from None


# -- domain types -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WidelyLinearLayer:
    u_re: PackedTernaryMatrix
    u_im: PackedTernaryMatrix
    w_re: PackedTernaryMatrix
    w_im: PackedTernaryMatrix
    scales: ScaleSet = ScaleSet()

    def __post_init__(self):
        dims = {(p.n, p.m_logical) for p in self.matrices}
        if len(dims) != 1:
            raise DimensionMismatch(f"all four matrices must share dimensions, got {sorted(dims)}")

    @property
    def matrices(self) -> tuple[PackedTernaryMatrix, ...]:
        return (self.u_re, self.u_im, self.w_re, self.w_im)

    @property
    def n(self) -> int:
        return self.u_re.n

    @property
    def m_logical(self) -> int:
        return self.u_re.m_logical

    @property
    def m_padded(self) -> int:
        return self.u_re.m_padded

    @property
    def nbytes(self) -> int:
        return sum(p.nbytes for p in self.matrices)

    def dense(self) -> tuple[np.ndarray, ...]:
        """Unpacked int8 (n, m_logical) matrices in U_re, U_im, W_re, W_im order."""
        return tuple(unpack_matrix(p) for p in self.matrices)


def _as_f32(v, name: str) -> np.ndarray:
    a = np.ascontiguousarray(v, dtype=np.float32)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class ActivationPair:
    """Real and imaginary activations, zero-padded to the layer's m_padded."""

    x_re: np.ndarray
    x_im: np.ndarray

    def __post_init__(self):
        re = _as_f32(self.x_re, "x_re")
        im = _as_f32(self.x_im, "x_im")
        if re.shape != im.shape:
            raise DimensionMismatch(f"x_re {re.shape} and x_im {im.shape} differ")
        object.__setattr__(self, "x_re", re)
        object.__setattr__(self, "x_im", im)

    def __len__(self) -> int:
        return self.x_re.shape[0]

    @classmethod
    def from_logical(cls, x_re, x_im=None, m_padded: Optional[int] = None) -> "ActivationPair":
        """Build a pair from unpadded vectors (``x_im`` defaults to zeros)."""
        re = _as_f32(x_re, "x_re")
        im = np.zeros_like(re) if x_im is None else _as_f32(x_im, "x_im")
        mp = padded_width(re.shape[0]) if m_padded is None else m_padded
        return cls(pad_to(re, mp), pad_to(im, mp))


def pad_to(v: np.ndarray, length: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float32)
    if v.shape[0] > length:
        raise DimensionMismatch(f"vector of length {v.shape[0]} exceeds padded length {length}")
    if v.shape[0] == length:
        return v
    out = np.zeros(length, dtype=np.float32)
    out[: v.shape[0]] = v
    return out


@dataclass(frozen=True, eq=False)
class GemvOutput:
    y_re: np.ndarray
    y_im: np.ndarray


@dataclass
class OpCounts:
    """Datapath operation tallies.

    ``addsub_slots`` counts element positions fed through the masked add/sub
    datapath (16 per masked instruction pair); ``masked_adds``/``masked_subs``
    count lanes whose mask bit was actually set and are ``None`` for the
    analytic model, which cannot know the weights.
    """

    decodes: int = 0
    add_instructions: int = 0
    sub_instructions: int = 0
    addsub_slots: int = 0
    masked_adds: Optional[int] = 0
    masked_subs: Optional[int] = 0
    inner_multiplies: int = 0
    scale_multiplies: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        vals = {}
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            vals[f.name] = None if a is None or b is None else a + b
        return OpCounts(**vals)

    @property
    def multiplication_fraction(self) -> float:
        """Scale multiplies relative to add/sub slots."""
        return self.scale_multiplies / self.addsub_slots if self.addsub_slots else 0.0

    def structural(self) -> tuple[int, ...]:
        """Weight-independent fields, comparable with the analytic model."""
        return (self.decodes, self.add_instructions, self.sub_instructions, self.addsub_slots,
                self.inner_multiplies, self.scale_multiplies)

    @classmethod
    def from_counters(cls, c: np.ndarray) -> "OpCounts":
        return cls(*(int(v) for v in c))


# -- validation helpers ---------------------------------------------------------

def _check_vector(x: np.ndarray, a: PackedTernaryMatrix, name: str = "x") -> np.ndarray:
    x = _as_f32(x, name)
    if x.shape[0] != a.m_padded:
        raise DimensionMismatch(f"{name} has length {x.shape[0]}, expected m_padded={a.m_padded}")
    if a.m_logical != a.m_padded and np.any(x[a.m_logical:]):
        raise DimensionMismatch(f"{name} padding entries beyond m_logical={a.m_logical} must be zero")
    return x


def _check_pair(layer: WidelyLinearLayer, x: ActivationPair) -> tuple[np.ndarray, np.ndarray]:
    return _check_vector(x.x_re, layer.u_re, "x_re"), _check_vector(x.x_im, layer.u_re, "x_im")


# -- kernels -----------------------------------------------------------------

def dense_gemv_f32(a: np.ndarray, x: np.ndarray, *, backend: str = "auto", workers: int = 1) -> np.ndarray:
    """FP32 dense GEMV, left-to-right binary32 accumulation per row (timing baseline)."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    x = _as_f32(x, "x")
    if a.ndim != 2 or a.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by vector of length {x.shape[0]}")
    be = resolve_backend(backend)
    y = np.zeros(a.shape[0], dtype=np.float32)
    run_partitioned(a.shape[0], workers, lambda r0, r1: be.dense_rows(a, x, y, r0, r1))
    return y


def ternary_gemv(a: PackedTernaryMatrix, x: np.ndarray, scale: float = 1.0, *,
                 variant: str = "reference", backend: str = "auto", workers: int = 1) -> np.ndarray:
    """``scale * (A @ x)`` for a packed ternary A using masked add/sub only."""
    x = _check_vector(x, a)
    code = _variant_code(variant)
    be = resolve_backend(backend)
    y = np.zeros(a.n, dtype=np.float32)
    s = float(np.float32(scale))
    run_partitioned(a.n, workers, lambda r0, r1: be.ternary_rows(a.words, x, y, r0, r1, s, code))
    return y


def fused_widely_linear(layer: WidelyLinearLayer, x: ActivationPair, *, variant: str = "reference",
                        backend: str = "auto", workers: int = 1) -> GemvOutput:
    """All eight sub-GEMVs of a widely-linear layer in one pass over each row.

    Per chunk every packed word is decoded once and its mask pair drives one
    real-path and one imaginary-path accumulator; the three activation chunks
    (x_re, x_im, -x_im) are shared by all eight streams.  The U_im real-path
    stream accumulates the pre-negated ``-x_im`` alias, so its scale enters the
    final combination with a plus sign.
    """
    xre, xim = _check_pair(layer, x)
    xnim = -xim
    code = _variant_code(variant)
    be = resolve_backend(backend)
    yre = np.zeros(layer.n, dtype=np.float32)
    yim = np.zeros(layer.n, dtype=np.float32)
    scales = layer.scales.as_array()
    ur, ui, wr, wi = (p.words for p in layer.matrices)

    def rows(r0, r1):
        be.fused_rows(ur, ui, wr, wi, xre, xim, xnim, yre, yim, r0, r1, scales, code)

    run_partitioned(layer.n, workers, rows)
    return GemvOutput(yre, yim)


def unfused_widely_linear(layer: WidelyLinearLayer, x: ActivationPair, *, variant: str = "reference",
                          backend: str = "auto", workers: int = 1) -> GemvOutput:
    """Naive baseline: eight separate ternary GEMVs (each its own parallel region)."""
    xre, xim = _check_pair(layer, x)
    kw = dict(variant=variant, backend=backend, workers=workers)
    h1 = ternary_gemv(layer.u_re, xre, **kw)
    h2 = ternary_gemv(layer.u_im, xim, **kw)
    h3 = ternary_gemv(layer.w_re, xre, **kw)
    h4 = ternary_gemv(layer.w_im, xim, **kw)
    g1 = ternary_gemv(layer.u_re, xim, **kw)
    g2 = ternary_gemv(layer.u_im, xre, **kw)
    g3 = ternary_gemv(layer.w_re, xim, **kw)
    g4 = ternary_gemv(layer.w_im, xre, **kw)
    s1, s2, s3, s4 = layer.scales.as_array()
    y_re = s1 * h1 - s2 * h2 + s3 * h3 + s4 * h4
    y_im = s1 * g1 + s2 * g2 + s3 * g3 - s4 * g4
    return GemvOutput(y_re.astype(np.float32), y_im.astype(np.float32))


# -- binary64 oracle ----------------------------------------------------------------

@njit(cache=True)
def _matvec64(a, x):
    n, m = a.shape
    y = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += float(a[i, j]) * x[j]
        y[i] = s
    return y


def oracle_widely_linear(u_re, u_im, w_re, w_im, scales: ScaleSet, x: ActivationPair) -> GemvOutput:
    """Ground truth in binary64 from dense ternary matrices, term by term."""
    mats = [np.asarray(a) for a in (u_re, u_im, w_re, w_im)]
    shapes = {a.shape for a in mats}
    if len(shapes) != 1 or mats[0].ndim != 2:
        raise DimensionMismatch(f"dense matrices must share one 2-D shape, got {sorted(shapes)}")
    m = mats[0].shape[1]
    if len(x) < m or np.any(x.x_re[m:]) or np.any(x.x_im[m:]):
        raise DimensionMismatch(f"activations of length {len(x)} do not fit m={m}")
    xr = x.x_re[:m].astype(np.float64)
    xi = x.x_im[:m].astype(np.float64)
    sur, sui, swr, swi = (float(v) for v in scales.as_array())
    a_ur, a_ui, a_wr, a_wi = (np.ascontiguousarray(a, dtype=np.int8) for a in mats)
    y_re = sur * _matvec64(a_ur, xr) - sui * _matvec64(a_ui, xi) + swr * _matvec64(a_wr, xr) + swi * _matvec64(a_wi, xi)
    y_im = sur * _matvec64(a_ur, xi) + sui * _matvec64(a_ui, xr) + swr * _matvec64(a_wr, xi) - swi * _matvec64(a_wi, xr)
    return GemvOutput(y_re, y_im)


def oracle_for(layer: WidelyLinearLayer, x: ActivationPair) -> GemvOutput:
    return oracle_widely_linear(*layer.dense(), layer.scales, x)


def relative_l2(approx, exact) -> float:
    """``||approx - exact|| / max(||exact||, 1e-30)`` computed in binary64."""
    a = np.asarray(approx, dtype=np.float64)
    e = np.asarray(exact, dtype=np.float64)
    return float(np.linalg.norm(a - e) / max(np.linalg.norm(e), 1e-30))


def output_error(out: GemvOutput, ref: GemvOutput) -> float:
    """Relative L2 over the concatenated (y_re, y_im) vector."""
    return relative_l2(np.concatenate([out.y_re, out.y_im]), np.concatenate([ref.y_re, ref.y_im]))


# -- instrumented op counting -----------------------------------------------

def instrumented_ternary_gemv(a: PackedTernaryMatrix, x: np.ndarray, scale: float = 1.0):
    """Reference single GEMV with every datapath op tallied; returns (y, OpCounts)."""
    x = _check_vector(x, a)
    y = np.zeros(a.n, dtype=np.float32)
    c = np.zeros(_portable.N_COUNTERS, dtype=np.int64)
    _portable.count_ternary(a.words, x, y, float(np.float32(scale)), c)
    return y, OpCounts.from_counters(c)


def instrumented_fused(layer: WidelyLinearLayer, x: ActivationPair):
    """Reference fused kernel with op tallies; returns (GemvOutput, OpCounts)."""
    xre, xim = _check_pair(layer, x)
    yre = np.zeros(layer.n, dtype=np.float32)
    yim = np.zeros(layer.n, dtype=np.float32)
    c = np.zeros(_portable.N_COUNTERS, dtype=np.int64)
    ur, ui, wr, wi = (p.words for p in layer.matrices)
    _portable.count_fused(ur, ui, wr, wi, xre, xim, -xim, yre, yim, layer.scales.as_array(), c)
    return GemvOutput(yre, yim), OpCounts.from_counters(c)


def count_ops(operand, kind: str = "fused", x=None) -> OpCounts:
    """Run an instrumented kernel and return its operation tallies.

    ``operand`` is a WidelyLinearLayer for ``kind`` ``"fused"``/``"unfused"``
    or a PackedTernaryMatrix for ``"single"``.  Activations default to ones.
    """
    if kind == "single":
        if not isinstance(operand, PackedTernaryMatrix):
            raise TypeError("kind='single' needs a PackedTernaryMatrix")
        vec = np.ones(operand.m_padded, dtype=np.float32) if x is None else x
        if x is None and operand.m_logical != operand.m_padded:
            vec[operand.m_logical:] = 0.0
        return instrumented_ternary_gemv(operand, vec)[1]
    if not isinstance(operand, WidelyLinearLayer):
        raise TypeError(f"kind={kind!r} needs a WidelyLinearLayer")
    if x is None:
        ones = np.ones(operand.m_logical, dtype=np.float32)
        x = ActivationPair.from_logical(ones, ones, operand.m_padded)
    if kind == "fused":
        return instrumented_fused(operand, x)[1]
    if kind == "unfused":
        total = OpCounts()
        streams = [(operand.u_re, x.x_re), (operand.u_im, x.x_im), (operand.w_re, x.x_re), (operand.w_im, x.x_im),
                   (operand.u_re, x.x_im), (operand.u_im, x.x_re), (operand.w_re, x.x_im), (operand.w_im, x.x_re)]
        for mat, vec in streams:
            total = total + instrumented_ternary_gemv(mat, vec)[1]
        # the eight scale=1 GEMVs each multiply once per row, then combination adds 8n more
        total.scale_multiplies += 8 * operand.n
        return total
    raise ValueError(f"unknown kind {kind!r}")
