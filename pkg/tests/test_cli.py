from __future__ import annotations

import csv
import io
import json

import pytest

from ternfuse.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_roofline_fused_cpu():
    code, text = run("roofline", "--platform", "cpu-8558p", "--kind", "fused", "--n", "4096", "--m", "4096")
    assert code == 0
    line = next(l for l in text.splitlines() if "asymptotic" in l)
    assert "ternary_fused" in line and " 8 " in f" {line.split()[2]} " and "13.5" in line
    assert "memory-bound" in line


def test_roofline_json_and_csv_parse():
    code, text = run("roofline", "--platform", "gpu-h200", "--format", "json", "--mode", "asymptotic")
    assert code == 0
    rows = json.loads(text)
    assert [r["ai"] for r in rows] == [0.25, 4.0, 8.0]
    assert all(r["regime"] == "memory-bound" for r in rows)
    code, text = run("roofline", "--platform", "custom", "--bw", "100", "--peak", "200", "--format", "csv")
    assert code == 0 and float(next(csv.DictReader(io.StringIO(text)))["ridge"]) == 2.0


def test_roofline_custom_needs_numbers():
    assert run("roofline", "--platform", "custom")[0] == 2


def test_pack_then_inspect(tmp_path):
    path = tmp_path / "t.tl2"
    code, text = run("pack", "--n", "16", "--m", "16", "--seed", "42", "--out", str(path))
    assert code == 0 and "272 bytes" in text
    code, text = run("inspect", str(path))
    assert code == 0
    assert "size_bytes     272" in text and "16x16" in text


def test_same_seed_same_file(tmp_path):
    a, b = tmp_path / "a.tl2", tmp_path / "b.tl2"
    run("pack", "--n", "20", "--m", "33", "--seed", "7", "--out", str(a))
    run("pack", "--n", "20", "--m", "33", "--seed", "7", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_inspect_errors(tmp_path):
    assert run("inspect", str(tmp_path / "missing.tl2"))[0] == 1
    bad = tmp_path / "bad.tl2"
    bad.write_bytes(b"\x01\x00")
    assert run("inspect", str(bad))[0] == 1


def test_verify_passes():
    code, text = run("verify", "--sizes", "16,64,256", "--trials", "20")
    assert code == 0
    assert "all checks passed" in text and "FAIL" not in text


def test_verify_is_reproducible():
    assert run("verify", "--sizes", "32", "--trials", "3", "--seed", "5") == \
        run("verify", "--sizes", "32", "--trials", "3", "--seed", "5")


@pytest.mark.parametrize("fmt", ["table", "csv", "json"])
def test_bench_small(fmt):
    code, text = run("bench", "--kind", "ternary", "--n", "32", "--m", "32", "--iters", "5", "--warmup", "1",
                     "--seeds", "1,2", "--format", fmt)
    assert code == 0
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        assert [r["seed"] for r in rows] == ["1", "2", "aggregate"]
    elif fmt == "json":
        assert json.loads(text)[-1]["seed"] == "aggregate"


def test_bench_check_cv_failure():
    # CV can never be negative, so a negative threshold must fail the gate
    code, _ = run("bench", "--kind", "fused", "--n", "16", "--m", "16", "--iters", "3", "--warmup", "0",
                  "--seeds", "1,2", "--check-cv", "-1")
    assert code == 1


def test_pipeline_small():
    code, text = run("pipeline", "--d-model", "32", "--d-ff", "64")
    assert code == 0
    assert "gate_up_proj" in text and "100.00" in text


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["roofline", "--bogus"],
    ["bench", "--kind", "sparse"],
    ["pack", "--n", "0", "--m", "16", "--out", "x"],
    ["verify", "--sizes", "a,b"],
    ["bench", "--cache-mode", "hot"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(*argv)[0] == 2


def test_help_exits_0(capsys):
    assert run("--help")[0] == 0
