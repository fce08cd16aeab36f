/*
 * Multiplication-free ternary GEMV kernels (AVX-512F + BMI2).
 *
 * Built at runtime by ternfuse.native and called through ctypes; each entry
 * point computes a half-open row range [r0, r1) so the Python side can
 * partition rows across threads (ctypes drops the GIL during the call).
 *
 * Arithmetic order is part of the contract: every variant here has a
 * bit-identical twin in ternfuse/_portable.py.
 *   - lane accumulators updated add-then-sub per chunk, chunks ascending
 *   - horizontal sums run lanes 0..15 left to right (not a tree reduce)
 *   - compile with -ffp-contract=off so scale*h + ... never becomes an FMA
 */
#include <immintrin.h>
#include <stdint.h>

#define M_POS 0xAAAAAAAAu
#define M_NEG 0x55555555u
#define PF_DIST 64 /* words (256 B) ahead of the current chunk */

enum { V_REFERENCE = 0, V_UNROLLED = 1, V_PREFETCH = 2 };

static inline float hsum_ordered(__m512 v) {
    float lanes[16];
    _mm512_storeu_ps(lanes, v);
    float s = 0.0f;
    for (int l = 0; l < 16; ++l) s += lanes[l];
    return s;
}

/* Masked accumulate: add x on lanes where w = +1, then subtract on w = -1. */
static inline __m512 mas(__m512 acc, __mmask16 kp, __mmask16 kn, __m512 x) {
    acc = _mm512_mask_add_ps(acc, kp, acc, x);
    return _mm512_mask_sub_ps(acc, kn, acc, x);
}

static inline __m512 masked_as(__m512 acc, uint32_t p, __m512 x) {
    return mas(acc, (__mmask16)_pext_u32(p, M_POS), (__mmask16)_pext_u32(p, M_NEG), x);
}

void tf_decode(const uint32_t *w, int64_t count, uint16_t *kpos, uint16_t *kneg) {
    for (int64_t i = 0; i < count; ++i) {
        kpos[i] = (uint16_t)_pext_u32(w[i], M_POS);
        kneg[i] = (uint16_t)_pext_u32(w[i], M_NEG);
    }
}

void tf_dense_gemv(const float *a, const float *x, float *y, int64_t m, int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
        const float *row = a + i * m;
        float acc = 0.0f;
        for (int64_t j = 0; j < m; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

void tf_ternary_gemv(const uint32_t *w, const float *x, float *y, int64_t nch, int64_t r0,
                     int64_t r1, float scale, int variant) {
    for (int64_t i = r0; i < r1; ++i) {
        const uint32_t *row = w + i * nch;
        float h;
        if (variant == V_REFERENCE) {
            __m512 acc = _mm512_setzero_ps();
            for (int64_t j = 0; j < nch; ++j)
                acc = masked_as(acc, row[j], _mm512_loadu_ps(x + 16 * j));
            h = hsum_ordered(acc);
        } else {
            /* four independent accumulators, chunk j feeds acc[j % 4] */
            __m512 a0 = _mm512_setzero_ps(), a1 = a0, a2 = a0, a3 = a0;
            int64_t j = 0;
            for (; j + 4 <= nch; j += 4) {
                if (variant == V_PREFETCH)
                    _mm_prefetch((const char *)(row + j + PF_DIST), _MM_HINT_T0);
                a0 = masked_as(a0, row[j], _mm512_loadu_ps(x + 16 * j));
                a1 = masked_as(a1, row[j + 1], _mm512_loadu_ps(x + 16 * (j + 1)));
                a2 = masked_as(a2, row[j + 2], _mm512_loadu_ps(x + 16 * (j + 2)));
                a3 = masked_as(a3, row[j + 3], _mm512_loadu_ps(x + 16 * (j + 3)));
            }
            if (j < nch) a0 = masked_as(a0, row[j], _mm512_loadu_ps(x + 16 * j));
            if (j + 1 < nch) a1 = masked_as(a1, row[j + 1], _mm512_loadu_ps(x + 16 * (j + 1)));
            if (j + 2 < nch) a2 = masked_as(a2, row[j + 2], _mm512_loadu_ps(x + 16 * (j + 2)));
            h = hsum_ordered(_mm512_add_ps(_mm512_add_ps(a0, a1), _mm512_add_ps(a2, a3)));
        }
        y[i] = scale * h;
    }
}

/* Fused widely-linear step for chunk J: eight accumulators, each weight word
 * decoded once (O1) and applied to a real-path and an imaginary-path chunk;
 * the three activation chunks are loaded once and shared (O2). */
#define FUSED_STEP(J, RE1, IM1, RE2, IM2, RE3, IM3, RE4, IM4)          \
    do {                                                               \
        __m512 xr = _mm512_loadu_ps(xre + 16 * (J));                   \
        __m512 xi = _mm512_loadu_ps(xim + 16 * (J));                   \
        __m512 xn = _mm512_loadu_ps(xnim + 16 * (J));                  \
        uint32_t p;                                                    \
        __mmask16 kp, kn;                                              \
        p = ur[J]; kp = _pext_u32(p, M_POS); kn = _pext_u32(p, M_NEG); \
        RE1 = mas(RE1, kp, kn, xr); IM1 = mas(IM1, kp, kn, xi);        \
        p = ui[J]; kp = _pext_u32(p, M_POS); kn = _pext_u32(p, M_NEG); \
        RE2 = mas(RE2, kp, kn, xn); IM2 = mas(IM2, kp, kn, xr);        \
        p = wr[J]; kp = _pext_u32(p, M_POS); kn = _pext_u32(p, M_NEG); \
        RE3 = mas(RE3, kp, kn, xr); IM3 = mas(IM3, kp, kn, xi);        \
        p = wi[J]; kp = _pext_u32(p, M_POS); kn = _pext_u32(p, M_NEG); \
        RE4 = mas(RE4, kp, kn, xi); IM4 = mas(IM4, kp, kn, xr);        \
    } while (0)

void tf_fused(const uint32_t *u_re, const uint32_t *u_im, const uint32_t *w_re,
              const uint32_t *w_im, const float *xre, const float *xim, const float *xnim,
              float *yre, float *yim, int64_t nch, int64_t r0, int64_t r1,
              const float *scales, int variant) {
    const float su_re = scales[0], su_im = scales[1], sw_re = scales[2], sw_im = scales[3];
    for (int64_t i = r0; i < r1; ++i) {
        const uint32_t *ur = u_re + i * nch, *ui = u_im + i * nch;
        const uint32_t *wr = w_re + i * nch, *wi = w_im + i * nch;
        __m512 r1a = _mm512_setzero_ps(), r2a = r1a, r3a = r1a, r4a = r1a;
        __m512 i1a = r1a, i2a = r1a, i3a = r1a, i4a = r1a;
        if (variant == V_REFERENCE) {
            for (int64_t j = 0; j < nch; ++j)
                FUSED_STEP(j, r1a, i1a, r2a, i2a, r3a, i3a, r4a, i4a);
        } else {
            /* two accumulator sets, chunk j feeds set j % 2 */
            __m512 r1b = _mm512_setzero_ps(), r2b = r1b, r3b = r1b, r4b = r1b;
            __m512 i1b = r1b, i2b = r1b, i3b = r1b, i4b = r1b;
            int64_t j = 0;
            for (; j + 2 <= nch; j += 2) {
                if (variant == V_PREFETCH) {
                    _mm_prefetch((const char *)(ur + j + PF_DIST), _MM_HINT_T0);
                    _mm_prefetch((const char *)(ui + j + PF_DIST), _MM_HINT_T0);
                    _mm_prefetch((const char *)(wr + j + PF_DIST), _MM_HINT_T0);
                    _mm_prefetch((const char *)(wi + j + PF_DIST), _MM_HINT_T0);
                }
                FUSED_STEP(j, r1a, i1a, r2a, i2a, r3a, i3a, r4a, i4a);
                FUSED_STEP(j + 1, r1b, i1b, r2b, i2b, r3b, i3b, r4b, i4b);
            }
            if (j < nch) FUSED_STEP(j, r1a, i1a, r2a, i2a, r3a, i3a, r4a, i4a);
            r1a = _mm512_add_ps(r1a, r1b); r2a = _mm512_add_ps(r2a, r2b);
            r3a = _mm512_add_ps(r3a, r3b); r4a = _mm512_add_ps(r4a, r4b);
            i1a = _mm512_add_ps(i1a, i1b); i2a = _mm512_add_ps(i2a, i2b);
            i3a = _mm512_add_ps(i3a, i3b); i4a = _mm512_add_ps(i4a, i4b);
        }
        /* the U_im real-path accumulator saw -x_im, so its term enters with + */
        yre[i] = su_re * hsum_ordered(r1a) + su_im * hsum_ordered(r2a) +
                 sw_re * hsum_ordered(r3a) + sw_im * hsum_ordered(r4a);
        yim[i] = su_re * hsum_ordered(i1a) + su_im * hsum_ordered(i2a) +
                 sw_re * hsum_ordered(i3a) - sw_im * hsum_ordered(i4a);
    }
}
