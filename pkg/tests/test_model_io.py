from __future__ import annotations

import hashlib
import io
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ternfuse.core import ScaleSet, pack_matrix
from ternfuse.errors import InvalidEncoding, LayerFormatError, MalformedHeader, ScaleLossWarning, SinkFailure, TruncatedFile
from ternfuse.kernels import WidelyLinearLayer
from ternfuse.model_io import (
    Component,
    LayerHeader,
    footprint_report,
    layer_file_size,
    layer_to_bytes,
    llama2_7b_components,
    read_layer,
    write_layer,
)
from ternfuse.synth import random_layer


def golden_layer() -> WidelyLinearLayer:
    """16x16 layer: U_re = I, U_im = -I, W_re = 0, W_im = all +1; scales 1.5 / -0.25."""
    eye = np.eye(16, dtype=np.int8)
    mats = [eye, -eye, np.zeros((16, 16), np.int8), np.ones((16, 16), np.int8)]
    return WidelyLinearLayer(*(pack_matrix(a) for a in mats), scales=ScaleSet(1.5, -0.25, 1.5, -0.25))


def golden_bytes() -> bytes:
    # written out by hand: header then four blocks of sixteen little-endian words
    header = "10000000" "10000000" "0000c03f" "000080be"
    u_re = "".join((1 << (2 * i + 1)).to_bytes(4, "little").hex() for i in range(16))
    u_im = "".join((1 << (2 * i)).to_bytes(4, "little").hex() for i in range(16))
    w_re = "00000000" * 16
    w_im = "aaaaaaaa" * 16
    return bytes.fromhex(header + u_re + u_im + w_re + w_im)


GOLDEN_SHA256 = "d6b81232f97d0de09af88d439eb2f4a9872591336772746f5d157b667298eef1"


def test_golden_bytes_hand_fixture_spot_checks():
    raw = golden_bytes()
    assert len(raw) == 272
    assert raw[16:20] == b"\x02\x00\x00\x00"  # U_re row 0: +1 in slot 0
    assert raw[76:80] == b"\x00\x00\x00\x80"  # U_re row 15: +1 in slot 15
    assert raw[80:84] == b"\x01\x00\x00\x00"  # U_im row 0: -1 in slot 0


def test_write_matches_golden_bytes():
    assert layer_to_bytes(golden_layer()) == golden_bytes()


def test_golden_digest_frozen():
    assert hashlib.sha256(golden_bytes()).hexdigest() == GOLDEN_SHA256


def test_read_golden_bytes():
    layer = read_layer(golden_bytes(), strict=True)
    assert (layer.n, layer.m_logical) == (16, 16)
    assert layer.scales == ScaleSet(1.5, -0.25, 1.5, -0.25)
    assert np.array_equal(layer.dense()[0], np.eye(16))
    assert np.array_equal(layer.dense()[3], np.ones((16, 16)))


@given(n=st.integers(1, 40), m=st.integers(1, 90), seed=st.integers(0, 2**31 - 1))
def test_roundtrip_bit_exact(n, m, seed):
    layer = random_layer(n, m, seed, tied_scales=True)
    raw = layer_to_bytes(layer)
    assert len(raw) == layer_file_size(n, m) == 16 + 4 * n * -(-m // 16) * 4
    back = read_layer(raw, strict=True)
    assert (back.n, back.m_logical) == (n, m)
    assert back.scales == layer.scales
    for a, b in zip(layer.matrices, back.matrices):
        assert a.words.tobytes() == b.words.tobytes()


def test_roundtrip_through_path_and_mmap(tmp_path):
    layer = random_layer(33, 50, 4, tied_scales=True)
    path = tmp_path / "layer.tl2"
    nbytes = write_layer(layer, path)
    assert nbytes == path.stat().st_size == layer_file_size(33, 50)
    for mm in (False, True):
        back = read_layer(path, mmap=mm)
        assert all(np.array_equal(a.words, b.words) for a, b in zip(layer.matrices, back.matrices))
    with open(path, "rb") as fh:
        assert read_layer(fh).n == 33


def test_four_scale_write_warns_and_maps_on_read():
    layer = random_layer(4, 16, 0)
    with pytest.warns(ScaleLossWarning):
        raw = layer_to_bytes(layer)
    s = read_layer(raw).scales
    assert (s.s_u_re, s.s_u_im) == (layer.scales.s_u_re, layer.scales.s_u_im)
    assert (s.s_w_re, s.s_w_im) == (s.s_u_re, s.s_u_im)


def test_tied_scales_do_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        layer_to_bytes(random_layer(4, 16, 0, tied_scales=True))


def test_truncated_file():
    raw = golden_bytes()
    with pytest.raises(TruncatedFile):
        read_layer(raw[:-1])
    with pytest.raises(TruncatedFile):
        read_layer(raw[:10])


def test_trailing_bytes_rejected():
    with pytest.raises(LayerFormatError):
        read_layer(golden_bytes() + b"\x00")


@pytest.mark.parametrize("n, m, sre, sim", [
    (0, 16, 1.0, 1.0),
    (16, 0, 1.0, 1.0),
    (16, 16, float("nan"), 1.0),
    (16, 16, 1.0, float("inf")),
])
def test_malformed_header(n, m, sre, sim):
    raw = bytearray(golden_bytes())
    raw[:16] = np.array([n, m], "<u4").tobytes() + np.array([sre, sim], "<f4").tobytes()
    with pytest.raises(MalformedHeader):
        read_layer(bytes(raw))


def test_strict_mode_rejects_11_slots():
    raw = bytearray(golden_bytes())
    raw[16] = 0x03  # U_re row 0, slot 0 -> (1,1)
    read_layer(bytes(raw))  # lenient read succeeds
    with pytest.raises(InvalidEncoding):
        read_layer(bytes(raw), strict=True)


def test_header_pack_unpack():
    h = LayerHeader(4096, 4096, 0.5, 2.0)
    assert LayerHeader.unpack(h.pack()) == h
    assert h.matrix_bytes == 4_194_304
    assert h.file_bytes == 16 + 16_777_216


class _BrokenSink(io.RawIOBase):
    def writable(self):
        return True

    def write(self, b):
        raise OSError("disk full")


def test_sink_failure():
    with pytest.raises(SinkFailure):
        write_layer(golden_layer(), _BrokenSink())


def test_unwritable_path(tmp_path):
    with pytest.raises(SinkFailure):
        write_layer(golden_layer(), tmp_path / "missing" / "x.tl2")


# -- footprint -------------------------------------------------------------------

def test_single_matrix_footprint():
    (row,) = footprint_report([Component("w", ((4096, 4096),))])
    assert row.stored_bytes == 4 * 2**20
    assert row.fp32_bytes == 64 * 2**20
    assert row.ratio_vs_fp32 == 16.0 and row.ratio_vs_fp16 == 8.0


def test_llama_attention_ratio():
    rows = {r.component: r for r in footprint_report(llama2_7b_components())}
    assert rows["attention_qkvo"].ratio_vs_fp16 == 8.0
    assert rows["mlp_gate_up_down"].ratio_vs_fp16 == 8.0
    assert rows["embedding_lm_head"].ratio_vs_fp16 == 1.0
    assert rows["attention_qkvo"].params == 32 * 4 * 4096 * 4096


def test_empty_footprint():
    assert footprint_report([]) == []


@given(st.integers(1, 500), st.integers(1, 64))
def test_ratio_exact_when_m_is_multiple_of_16(n, chunks):
    (row,) = footprint_report([Component("w", ((n, 16 * chunks),))])
    assert row.ratio_vs_fp16 == 8.0 and row.ratio_vs_fp32 == 16.0


def test_ratio_below_8_with_padding():
    (row,) = footprint_report([Component("w", ((10, 17),))])
    assert row.ratio_vs_fp16 < 8.0


def test_unknown_precision():
    with pytest.raises(ValueError):
        footprint_report([Component("w", ((1, 1),), "int4")])
