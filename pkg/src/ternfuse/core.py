"""Ternary encoding, 2-bit packing and mask decoding.

Layout of one packed word (uint32, 16 slots)::

    slot k -> bit 2k   : negative indicator (subtract)
              bit 2k+1 : positive indicator (add)

    (0,0) -> 0    (1,0) -> +1    (0,1) -> -1    (1,1) -> invalid

Decoding a word yields two 16-bit lane masks, LSB-first, which is what a
parallel-bit-extract with ``M_POS``/``M_NEG`` produces.  Matrices are packed
row-major with the input dimension padded up to a multiple of 16 using the
zero encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidEncoding

SLOTS = 16
M_POS = 0xAAAAAAAA
M_NEG = 0x55555555

_SLOT_IDX = np.arange(SLOTS, dtype=np.uint32)
_POS_SHIFT = 2 * _SLOT_IDX + 1
_NEG_SHIFT = 2 * _SLOT_IDX


class MaskPair(NamedTuple):
    k_pos: int
    k_neg: int


def padded_width(m: int) -> int:
    """Round ``m`` up to the next multiple of 16."""
    return SLOTS * -(-m // SLOTS)


def _check_trits(t: np.ndarray) -> None:
    if not np.isin(t, (-1, 0, 1)).all():
        raise ValueError("ternary weights must be in {-1, 0, +1}")


def pack_slots(t: Sequence[int]) -> int:
    """Pack exactly 16 ternary values into one 32-bit word."""
    if len(t) != SLOTS:
        raise ValueError(f"expected {SLOTS} values, got {len(t)}")
    word = 0
    for k, v in enumerate(t):
        if v == 1:
            word |= 1 << (2 * k + 1)
        elif v == -1:
            word |= 1 << (2 * k)
        elif v != 0:
            raise ValueError(f"slot {k}: {v!r} is not ternary")
    return word


def unpack_slots(p: int) -> np.ndarray:
    """Inverse of :func:`pack_slots`; raises InvalidEncoding on a (1,1) slot."""
    p = int(p) & 0xFFFFFFFF
    out = np.zeros(SLOTS, dtype=np.int8)
    for k in range(SLOTS):
        neg = (p >> (2 * k)) & 1
        pos = (p >> (2 * k + 1)) & 1
        if pos and neg:
            raise InvalidEncoding(f"slot {k} of word {p:#010x} uses the (1,1) pattern")
        out[k] = pos - neg
    return out


def decode_masks_loop(p: int) -> MaskPair:
    """Portable bit-loop decode: one bit per iteration, no tricks."""
    p = int(p) & 0xFFFFFFFF
    k_pos = 0
    k_neg = 0
    for k in range(SLOTS):
        k_neg |= ((p >> (2 * k)) & 1) << k
        k_pos |= ((p >> (2 * k + 1)) & 1) << k
    return MaskPair(k_pos, k_neg)


def _compact_even(v):
    # gather the even-position bits of a 32-bit value into its low 16 bits
    v = v & 0x55555555
    v = (v | (v >> 1)) & 0x33333333
    v = (v | (v >> 2)) & 0x0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF
    return v


def decode_masks(p: int) -> MaskPair:
    """Split a packed word into its (add, subtract) lane masks.

    Equivalent to ``pext(p, M_POS), pext(p, M_NEG)``.  Validation is not
    performed; a (1,1) slot simply sets the lane in both masks.
    """
    p = int(p) & 0xFFFFFFFF
    return MaskPair(_compact_even(p >> 1), _compact_even(p))


def decode_masks_array(words: np.ndarray, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Vectorised decode of many words into ``(k_pos, k_neg)`` uint16 arrays.

    ``method`` is one of ``"loop"`` (portable bit loop), ``"swar"`` (shift-and-
    mask compaction), ``"pext"`` (hardware BMI2 through the native library)
    or ``"auto"`` (pext when the native library loads, else swar).
    """
    w = np.ascontiguousarray(words, dtype=np.uint32)
    if method == "auto":
        from . import native

        method = "pext" if native.available() else "swar"
    if method == "loop":
        k_pos = np.zeros(w.shape, dtype=np.uint32)
        k_neg = np.zeros(w.shape, dtype=np.uint32)
        one = np.uint32(1)
        for k in range(SLOTS):
            k_neg |= ((w >> np.uint32(2 * k)) & one) << np.uint32(k)
            k_pos |= ((w >> np.uint32(2 * k + 1)) & one) << np.uint32(k)
        return k_pos.astype(np.uint16), k_neg.astype(np.uint16)
    if method == "swar":
        return (
            _compact_even(w >> np.uint32(1)).astype(np.uint16),
            _compact_even(w).astype(np.uint16),
        )
    if method == "pext":
        from . import native

        return native.decode(w)
    raise ValueError(f"unknown decode method {method!r}")


def pack_words(trits: np.ndarray) -> np.ndarray:
    """Pack an array of shape (..., 16) of ternary values into uint32 words."""
    t = np.asarray(trits)
    if t.shape[-1:] != (SLOTS,):
        raise ValueError(f"last axis must have {SLOTS} slots, got shape {t.shape}")
    _check_trits(t)
    bits = ((t == 1).astype(np.uint32) << _POS_SHIFT) | ((t == -1).astype(np.uint32) << _NEG_SHIFT)
    return np.bitwise_or.reduce(bits, axis=-1).astype(np.uint32)


def invalid_slots(words: np.ndarray) -> np.ndarray:
    """Per-word bitmask of slots carrying the (1,1) pattern (0 means valid)."""
    w = np.asarray(words, dtype=np.uint32)
    return w & (w >> np.uint32(1)) & np.uint32(M_NEG)


def unpack_words(words: np.ndarray, strict: bool = True) -> np.ndarray:
    """Unpack uint32 words into int8 ternary values of shape (..., 16)."""
    w = np.asarray(words, dtype=np.uint32)
    if strict and invalid_slots(w).any():
        raise InvalidEncoding("packed data contains the (1,1) slot pattern")
    w = w[..., None]
    pos = ((w >> _POS_SHIFT) & np.uint32(1)).astype(np.int8)
    neg = ((w >> _NEG_SHIFT) & np.uint32(1)).astype(np.int8)
    return pos - neg


@dataclass(frozen=True, eq=False)
class PackedTernaryMatrix:
    """Row-major packed ternary matrix; ``words`` has shape (n, m_padded // 16)."""

    n: int
    m_logical: int
    words: np.ndarray

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint32)
        if self.n < 1 or self.m_logical < 1:
            raise DimensionMismatch(f"dimensions must be positive, got {self.n}x{self.m_logical}")
        expect = (self.n, padded_width(self.m_logical) // SLOTS)
        if words.shape != expect:
            raise DimensionMismatch(f"words shape {words.shape} != {expect}")
        tail = self.m_logical % SLOTS
        if tail:
            pad_bits = np.uint32((0xFFFFFFFF << (2 * tail)) & 0xFFFFFFFF)
            if (words[:, -1] & pad_bits).any():
                raise InvalidEncoding("padding slots beyond m_logical must encode 0")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def m_padded(self) -> int:
        return padded_width(self.m_logical)

    @property
    def chunks(self) -> int:
        return self.words.shape[1]

    @property
    def nbytes(self) -> int:
        return self.words.nbytes

    def validate(self) -> None:
        """Raise InvalidEncoding if any slot uses the (1,1) pattern."""
        bad = invalid_slots(self.words)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise InvalidEncoding(f"(1,1) slot in row {i}, chunk {j}")

    def to_dense(self) -> np.ndarray:
        return unpack_matrix(self)


def pack_matrix(dense: np.ndarray, block_rows: int = 2048) -> PackedTernaryMatrix:
    """Pack an (n, m) ternary array, padding columns to a multiple of 16."""
    a = np.asarray(dense)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    n, m = a.shape
    mp = padded_width(m)
    words = np.empty((n, mp // SLOTS), dtype=np.uint32)
    # row blocks bound the temporary uint32 expansion for large layers
    for r0 in range(0, n, block_rows):
        blk = a[r0:r0 + block_rows]
        if mp != m:
            blk = np.pad(blk, ((0, 0), (0, mp - m)))
        words[r0:r0 + block_rows] = pack_words(blk.reshape(blk.shape[0], -1, SLOTS))
    return PackedTernaryMatrix(n, m, words)


def unpack_matrix(packed: PackedTernaryMatrix, padded: bool = False) -> np.ndarray:
    """Dense int8 view of a packed matrix (logical columns unless ``padded``)."""
    dense = unpack_words(packed.words).reshape(packed.n, packed.m_padded)
    return dense if padded else dense[:, :packed.m_logical]


@dataclass(frozen=True)
class ScaleSet:
    """The four per-tensor scales of a widely-linear layer (binary32)."""

    s_u_re: float = 1.0
    s_u_im: float = 1.0
    s_w_re: float = 1.0
    s_w_im: float = 1.0

    def __post_init__(self):
        for name in ("s_u_re", "s_u_im", "s_w_re", "s_w_im"):
            with np.errstate(over="ignore"):
                v = np.float32(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))

    def as_array(self) -> np.ndarray:
        return np.array([self.s_u_re, self.s_u_im, self.s_w_re, self.s_w_im], dtype=np.float32)

    @classmethod
    def from_array(cls, a) -> "ScaleSet":
        return cls(*(float(v) for v in np.asarray(a, dtype=np.float32)))
