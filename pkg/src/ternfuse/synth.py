"""Seeded random layers and activations.

All generation goes through ``numpy.random.Generator(PCG64(seed))``; PCG64 is
a fixed, documented algorithm, so a seed pins the same layer across numpy
versions that keep the PCG64 stream (1.17+).
"""

from __future__ import annotations

import numpy as np

from .core import PackedTernaryMatrix, ScaleSet, pack_matrix
from .kernels import ActivationPair, WidelyLinearLayer


def rng_for(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_ternary(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Uniform {-1, 0, +1} int8 matrix."""
    return rng.integers(-1, 2, size=(n, m), dtype=np.int8)


def random_packed(rng: np.random.Generator, n: int, m: int, block_rows: int = 1024) -> PackedTernaryMatrix:
    # packs in row blocks so large layers never hold the full int8 matrix
    from .core import SLOTS, pack_words, padded_width

    mp = padded_width(m)
    words = np.empty((n, mp // SLOTS), dtype=np.uint32)
    for r0 in range(0, n, block_rows):
        rows = min(block_rows, n - r0)
        blk = np.zeros((rows, mp), dtype=np.int8)
        blk[:, :m] = random_ternary(rng, rows, m)
        words[r0:r0 + rows] = pack_words(blk.reshape(rows, -1, SLOTS))
    return PackedTernaryMatrix(n, m, words)


def random_scales(rng: np.random.Generator, low: float = 0.5, high: float = 2.0, tied: bool = False) -> ScaleSet:
    """Four scales uniform in [low, high]; ``tied`` sets s_w = s_u (file-representable)."""
    s = rng.uniform(low, high, size=4).astype(np.float32)
    if tied:
        s[2], s[3] = s[0], s[1]
    return ScaleSet.from_array(s)


def random_layer(n: int, m: int, seed=0, *, tied_scales: bool = False, keep_dense: bool = False):
    """Random widely-linear layer; with ``keep_dense`` also returns the int8 matrices."""
    rng = rng_for(seed)
    if keep_dense:
        dense = [random_ternary(rng, n, m) for _ in range(4)]
        packed = [pack_matrix(d) for d in dense]
    else:
        packed = [random_packed(rng, n, m) for _ in range(4)]
    layer = WidelyLinearLayer(*packed, scales=random_scales(rng, tied=tied_scales))
    return (layer, dense) if keep_dense else layer


def random_activations(m: int, seed=0, *, m_padded=None, imag: bool = True, low=-1.0, high=1.0) -> ActivationPair:
    rng = rng_for(seed)
    x_re = rng.uniform(low, high, size=m).astype(np.float32)
    x_im = rng.uniform(low, high, size=m).astype(np.float32) if imag else np.zeros(m, dtype=np.float32)
    return ActivationPair.from_logical(x_re, x_im, m_padded)
