"""On-disk layer format (``.tl2``) and memory-footprint accounting.

Layout, all little-endian, no magic number or version field::

    offset 0   uint32  n         output dimension
    offset 4   uint32  m         input dimension
    offset 8   float32 scale_re
    offset 12  float32 scale_im
    offset 16  U_re, U_im, W_re, W_im packed words, each n * ceil(m/16) uint32

The header carries two scales while the fused kernel uses four.  On read,
``scale_re`` feeds s_u_re and s_w_re and ``scale_im`` feeds s_u_im and s_w_im;
on write, s_u_* are stored and a ScaleLossWarning fires if s_w_* differ.
"""

from __future__ import annotations

import io
import os
import struct
import warnings
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Union

import numpy as np

from .core import SLOTS, PackedTernaryMatrix, ScaleSet, padded_width
from .errors import LayerFormatError, MalformedHeader, ScaleLossWarning, SinkFailure, TruncatedFile
from .kernels import WidelyLinearLayer

HEADER = struct.Struct("<IIff")
HEADER_BYTES = HEADER.size
SUFFIX = ".tl2"

PathOrFile = Union[str, os.PathLike, BinaryIO]


@dataclass(frozen=True)
class LayerHeader:
    n: int
    m: int
    scale_re: float
    scale_im: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise MalformedHeader(f"dimensions must be >= 1, got n={self.n}, m={self.m}")
        if not (np.isfinite(self.scale_re) and np.isfinite(self.scale_im)):
            raise MalformedHeader(f"non-finite scales ({self.scale_re}, {self.scale_im})")

    @property
    def matrix_bytes(self) -> int:
        return self.n * (padded_width(self.m) // SLOTS) * 4

    @property
    def file_bytes(self) -> int:
        return HEADER_BYTES + 4 * self.matrix_bytes

    def pack(self) -> bytes:
        return HEADER.pack(self.n, self.m, self.scale_re, self.scale_im)

    @classmethod
    def unpack(cls, raw: bytes) -> "LayerHeader":
        if len(raw) < HEADER_BYTES:
            raise TruncatedFile(f"header needs {HEADER_BYTES} bytes, got {len(raw)}")
        return cls(*HEADER.unpack(raw[:HEADER_BYTES]))


def layer_file_size(n: int, m: int) -> int:
    return HEADER_BYTES + 4 * n * (-(-m // SLOTS)) * 4


def header_for(layer: WidelyLinearLayer) -> LayerHeader:
    s = layer.scales
    return LayerHeader(layer.n, layer.m_logical, s.s_u_re, s.s_u_im)


def _layer_bytes(layer: WidelyLinearLayer) -> Iterable[bytes]:
    s = layer.scales
    if s.s_w_re != s.s_u_re or s.s_w_im != s.s_u_im:
        warnings.warn(
            f"layer has four distinct scales {tuple(s.as_array())}; the two-scale header keeps "
            f"s_u only (s_w_re={s.s_w_re} -> {s.s_u_re}, s_w_im={s.s_w_im} -> {s.s_u_im})",
            ScaleLossWarning,
            stacklevel=3,
        )
    yield header_for(layer).pack()
    for p in layer.matrices:
        yield p.words.astype("<u4", copy=False).tobytes()


def write_layer(layer: WidelyLinearLayer, destination: PathOrFile) -> int:
    """Write ``layer`` to a path or binary file object; returns bytes written."""
    total = 0
    try:
        if isinstance(destination, (str, os.PathLike)):
            with open(destination, "wb") as fh:
                for chunk in _layer_bytes(layer):
                    total += fh.write(chunk)
        else:
            for chunk in _layer_bytes(layer):
                total += destination.write(chunk)
    except OSError as exc:
        raise SinkFailure(f"failed writing layer: {exc}") from exc
    return total


def layer_to_bytes(layer: WidelyLinearLayer) -> bytes:
    buf = io.BytesIO()
    write_layer(layer, buf)
    return buf.getvalue()


def _from_buffer(header: LayerHeader, payload, strict: bool) -> WidelyLinearLayer:
    words = np.frombuffer(payload, dtype="<u4").astype(np.uint32, copy=False)
    nch = padded_width(header.m) // SLOTS
    per = header.n * nch
    mats = []
    for k in range(4):
        w = words[k * per:(k + 1) * per].reshape(header.n, nch)
        mat = PackedTernaryMatrix(header.n, header.m, w)
        if strict:
            mat.validate()
        mats.append(mat)
    scales = ScaleSet(header.scale_re, header.scale_im, header.scale_re, header.scale_im)
    return WidelyLinearLayer(*mats, scales=scales)


def _check_size(header: LayerHeader, actual: int) -> None:
    if actual < header.file_bytes:
        raise TruncatedFile(f"expected {header.file_bytes} bytes for {header.n}x{header.m}, got {actual}")
    if actual > header.file_bytes:
        raise LayerFormatError(f"{actual - header.file_bytes} trailing bytes after the payload")


def read_layer(source: Union[PathOrFile, bytes, bytearray, memoryview], *, strict: bool = False,
               mmap: bool = False) -> WidelyLinearLayer:
    """Load a layer from a path, binary file object or bytes.

    ``strict`` rejects any (1,1) slot with InvalidEncoding.  ``mmap`` (paths
    only) maps the payload read-only instead of reading it into memory.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
        header = LayerHeader.unpack(raw)
        _check_size(header, len(raw))
        return _from_buffer(header, raw[HEADER_BYTES:], strict)
    if isinstance(source, (str, os.PathLike)):
        size = os.path.getsize(source)
        with open(source, "rb") as fh:
            header = LayerHeader.unpack(fh.read(HEADER_BYTES))
            _check_size(header, size)
            if not mmap:
                return _from_buffer(header, fh.read(), strict)
        mapped = np.memmap(source, dtype="<u4", mode="r", offset=HEADER_BYTES)
        return _from_buffer(header, mapped, strict)
    raw = source.read()
    return read_layer(raw, strict=strict)


# -- footprint accounting -------------------------------------------------------

PRECISION_BYTES = {"fp32": 4.0, "fp16": 2.0}


@dataclass(frozen=True)
class Component:
    """A group of weight matrices stored at one precision.

    ``shapes`` lists (n, m) for one block; ``count`` repeats the block (e.g.
    once per transformer layer).  ``precision`` is ``"ternary"``, ``"fp16"``
    or ``"fp32"``.
    """

    name: str
    shapes: tuple[tuple[int, int], ...]
    precision: str = "ternary"
    count: int = 1


@dataclass(frozen=True)
class FootprintRow:
    component: str
    params: int
    fp32_bytes: int
    fp16_bytes: int
    stored_bytes: int
    precision: str

    @property
    def ratio_vs_fp16(self) -> float:
        return self.fp16_bytes / self.stored_bytes if self.stored_bytes else float("nan")

    @property
    def ratio_vs_fp32(self) -> float:
        return self.fp32_bytes / self.stored_bytes if self.stored_bytes else float("nan")

    def as_dict(self) -> dict:
        return {
            "component": self.component,
            "precision": self.precision,
            "params": self.params,
            "fp32_bytes": self.fp32_bytes,
            "fp16_bytes": self.fp16_bytes,
            "stored_bytes": self.stored_bytes,
            "ratio_vs_fp16": self.ratio_vs_fp16,
            "ratio_vs_fp32": self.ratio_vs_fp32,
        }


def ternary_matrix_bytes(n: int, m: int) -> int:
    return n * (-(-m // SLOTS)) * 4


def footprint_report(components: Iterable[Component]) -> list[FootprintRow]:
    rows = []
    for c in components:
        params = sum(n * m for n, m in c.shapes) * c.count
        if c.precision == "ternary":
            stored = sum(ternary_matrix_bytes(n, m) for n, m in c.shapes) * c.count
        elif c.precision in PRECISION_BYTES:
            stored = int(params * PRECISION_BYTES[c.precision])
        else:
            raise ValueError(f"unknown precision {c.precision!r}")
        rows.append(FootprintRow(c.name, params, 4 * params, 2 * params, stored, c.precision))
    return rows


def llama2_7b_components(d_model: int = 4096, d_ff: int = 11008, n_layers: int = 32,
                         vocab: int = 32000) -> list[Component]:
    """Weight groups of a LLaMA-2-7B style decoder (embeddings kept at FP16)."""
    return [
        Component("attention_qkvo", ((d_model, d_model),) * 4, "ternary", n_layers),
        Component("mlp_gate_up_down", ((d_ff, d_model), (d_ff, d_model), (d_model, d_ff)), "ternary", n_layers),
        Component("embedding_lm_head", ((vocab, d_model), (vocab, d_model)), "fp16", 1),
    ]
