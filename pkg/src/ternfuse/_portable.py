"""Portable numba kernels.

Scalar twins of ``_csrc/ternary_kernels.c``: same row-range signatures, same
accumulator grouping and summation order, so each variant is bit-identical
across backends.  Also hosts the instrumented op-counting kernels.
"""

from __future__ import annotations

import numpy as np
from numba import njit

REFERENCE, UNROLLED, PREFETCH = 0, 1, 2

# slots of the counter array filled by the instrumented kernels
C_DECODES, C_ADD_INSTR, C_SUB_INSTR, C_SLOTS, C_ADDS, C_SUBS, C_INNER_MUL, C_SCALE_MUL = range(8)
N_COUNTERS = 8


@njit(inline="always")
def _compact_even(v):
    v &= 0x55555555
    v = (v | (v >> 1)) & 0x33333333
    v = (v | (v >> 2)) & 0x0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF
    return v


@njit(inline="always")
def _masked_as(acc, p, x, base):
    kp = _compact_even(p >> 1)
    kn = _compact_even(p)
    for l in range(16):
        if (kp >> l) & 1:
            acc[l] += x[base + l]
        if (kn >> l) & 1:
            acc[l] -= x[base + l]


@njit(inline="always")
def _hsum(acc):
    s = np.float32(0.0)
    for l in range(16):
        s += acc[l]
    return s


@njit(nogil=True, cache=True)
def dense_rows(a, x, y, r0, r1):
    m = a.shape[1]
    for i in range(r0, r1):
        acc = np.float32(0.0)
        for j in range(m):
            acc += a[i, j] * x[j]
        y[i] = acc


@njit(nogil=True, cache=True)
def ternary_rows(words, x, y, r0, r1, scale, variant):
    nch = words.shape[1]
    s = np.float32(scale)
    acc = np.zeros((4, 16), dtype=np.float32)
    tot = np.zeros(16, dtype=np.float32)
    for i in range(r0, r1):
        acc[:] = 0.0
        if variant == REFERENCE:
            for j in range(nch):
                _masked_as(acc[0], np.int64(words[i, j]), x, 16 * j)
            h = _hsum(acc[0])
        else:
            for j in range(nch):
                _masked_as(acc[j % 4], np.int64(words[i, j]), x, 16 * j)
            for l in range(16):
                tot[l] = (acc[0, l] + acc[1, l]) + (acc[2, l] + acc[3, l])
            h = _hsum(tot)
        y[i] = s * h


@njit(inline="always")
def _fused_step(acc, ur, ui, wr, wi, xre, xim, xnim, j):
    # acc rows: 0..3 real path (U_re, U_im, W_re, W_im), 4..7 imaginary path
    b = 16 * j
    for k in range(4):
        if k == 0:
            p = np.int64(ur[j])
            xa, xb = xre, xim
        elif k == 1:
            p = np.int64(ui[j])
            xa, xb = xnim, xre
        elif k == 2:
            p = np.int64(wr[j])
            xa, xb = xre, xim
        else:
            p = np.int64(wi[j])
            xa, xb = xim, xre
        kp = _compact_even(p >> 1)
        kn = _compact_even(p)
        for l in range(16):
            if (kp >> l) & 1:
                acc[k, l] += xa[b + l]
                acc[k + 4, l] += xb[b + l]
            if (kn >> l) & 1:
                acc[k, l] -= xa[b + l]
                acc[k + 4, l] -= xb[b + l]


@njit(inline="always")
def _combine(acc, scales):
    su_re, su_im, sw_re, sw_im = scales[0], scales[1], scales[2], scales[3]
    yre = su_re * _hsum(acc[0]) + su_im * _hsum(acc[1]) + sw_re * _hsum(acc[2]) + sw_im * _hsum(acc[3])
    yim = su_re * _hsum(acc[4]) + su_im * _hsum(acc[5]) + sw_re * _hsum(acc[6]) - sw_im * _hsum(acc[7])
    return yre, yim


@njit(nogil=True, cache=True)
def fused_rows(ur, ui, wr, wi, xre, xim, xnim, yre, yim, r0, r1, scales, variant):
    nch = ur.shape[1]
    acc = np.zeros((8, 16), dtype=np.float32)
    acc_b = np.zeros((8, 16), dtype=np.float32)
    for i in range(r0, r1):
        acc[:] = 0.0
        if variant == REFERENCE:
            for j in range(nch):
                _fused_step(acc, ur[i], ui[i], wr[i], wi[i], xre, xim, xnim, j)
        else:
            acc_b[:] = 0.0
            for j in range(nch):
                if j % 2 == 0:
                    _fused_step(acc, ur[i], ui[i], wr[i], wi[i], xre, xim, xnim, j)
                else:
                    _fused_step(acc_b, ur[i], ui[i], wr[i], wi[i], xre, xim, xnim, j)
            for k in range(8):
                for l in range(16):
                    acc[k, l] = acc[k, l] + acc_b[k, l]
        yre[i], yim[i] = _combine(acc, scales)


# -- instrumented kernels ---------------------------------------------------
# Same arithmetic as the reference variant, with every datapath operation
# tallied.  The inner loop has no multiply to count; the counter exists so
# any future regression that introduces one shows up as non-zero.

@njit(inline="always")
def _counted_as(acc, p, x, base, counts):
    kp = _compact_even(p >> 1)
    kn = _compact_even(p)
    counts[C_DECODES] += 2
    counts[C_ADD_INSTR] += 1
    counts[C_SUB_INSTR] += 1
    counts[C_SLOTS] += 16
    for l in range(16):
        if (kp >> l) & 1:
            acc[l] += x[base + l]
            counts[C_ADDS] += 1
        if (kn >> l) & 1:
            acc[l] -= x[base + l]
            counts[C_SUBS] += 1


@njit(cache=True)
def count_ternary(words, x, y, scale, counts):
    nch = words.shape[1]
    s = np.float32(scale)
    acc = np.zeros(16, dtype=np.float32)
    for i in range(words.shape[0]):
        acc[:] = 0.0
        for j in range(nch):
            _counted_as(acc, np.int64(words[i, j]), x, 16 * j, counts)
        y[i] = s * _hsum(acc)
        counts[C_SCALE_MUL] += 1


@njit(cache=True)
def count_fused(ur, ui, wr, wi, xre, xim, xnim, yre, yim, scales, counts):
    nch = ur.shape[1]
    acc = np.zeros((8, 16), dtype=np.float32)
    for i in range(ur.shape[0]):
        acc[:] = 0.0
        for j in range(nch):
            b = 16 * j
            for k in range(4):
                if k == 0:
                    p = np.int64(ur[i, j])
                    xa, xb = xre, xim
                elif k == 1:
                    p = np.int64(ui[i, j])
                    xa, xb = xnim, xre
                elif k == 2:
                    p = np.int64(wr[i, j])
                    xa, xb = xre, xim
                else:
                    p = np.int64(wi[i, j])
                    xa, xb = xim, xre
                kp = _compact_even(p >> 1)
                kn = _compact_even(p)
                # one decode pair per word, shared by both paths
                counts[C_DECODES] += 2
                counts[C_ADD_INSTR] += 2
                counts[C_SUB_INSTR] += 2
                counts[C_SLOTS] += 32
                for l in range(16):
                    if (kp >> l) & 1:
                        acc[k, l] += xa[b + l]
                        acc[k + 4, l] += xb[b + l]
                        counts[C_ADDS] += 2
                    if (kn >> l) & 1:
                        acc[k, l] -= xa[b + l]
                        acc[k + 4, l] -= xb[b + l]
                        counts[C_SUBS] += 2
        yre[i], yim[i] = _combine(acc, scales)
        counts[C_SCALE_MUL] += 8
