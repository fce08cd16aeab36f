from __future__ import annotations

import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ternfuse.kernels import dense_gemv_f32, fused_widely_linear, ternary_gemv
from ternfuse.parallel import default_workers, parallel_fused, parallel_ternary_gemv, partition_rows, run_partitioned
from ternfuse.synth import random_activations, random_layer


@given(st.integers(0, 5000), st.integers(1, 64))
def test_partition_covers_rows_once_and_balances(n, t):
    part = partition_rows(n, t)
    assert len(part) == t
    flat = [i for lo, hi in part for i in range(lo, hi)]
    assert flat == list(range(n))
    sizes = part.sizes
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)


def test_partition_examples():
    assert partition_rows(10, 3).ranges == ((0, 4), (4, 7), (7, 10))
    assert partition_rows(2, 4).ranges == ((0, 1), (1, 2), (2, 2), (2, 2))


def test_partition_rejects_bad_args():
    with pytest.raises(ValueError):
        partition_rows(-1, 2)
    with pytest.raises(ValueError):
        partition_rows(4, 0)


def test_run_partitioned_uses_threads_and_skips_empty():
    seen, lock = [], threading.Lock()

    def fn(lo, hi):
        with lock:
            seen.append((lo, hi, threading.current_thread().name))

    run_partitioned(3, 8, fn)
    assert sorted((lo, hi) for lo, hi, _ in seen) == [(0, 1), (1, 2), (2, 3)]
    assert all(name.startswith("ternfuse") for _, _, name in seen)


def test_run_partitioned_propagates_errors():
    def fn(lo, hi):
        if lo > 0:
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError, match="boom"):
        run_partitioned(10, 4, fn)


def test_default_workers_positive():
    assert default_workers() >= 1


@pytest.mark.parametrize("variant", ["reference", "unrolled", "prefetch"])
@given(n=st.integers(1, 70), m=st.integers(1, 50), t=st.integers(2, 17), seed=st.integers(0, 2**31 - 1))
def test_thread_count_invariance(backend, variant, n, m, t, seed):
    layer = random_layer(n, m, seed)
    x = random_activations(m, seed + 1, m_padded=layer.m_padded)
    one = fused_widely_linear(layer, x, variant=variant, backend=backend, workers=1)
    many = parallel_fused(layer, x, t, variant=variant, backend=backend)
    assert one.y_re.tobytes() == many.y_re.tobytes() and one.y_im.tobytes() == many.y_im.tobytes()
    y1 = ternary_gemv(layer.u_im, x.x_re, 0.25, variant=variant, backend=backend)
    yt = parallel_ternary_gemv(layer.u_im, x.x_re, 0.25, t, variant=variant, backend=backend)
    assert y1.tobytes() == yt.tobytes()


def test_dense_thread_invariance(backend):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((33, 40)).astype(np.float32)
    x = rng.standard_normal(40).astype(np.float32)
    base = dense_gemv_f32(a, x, backend=backend)
    for t in (2, 3, 8, 64):
        assert dense_gemv_f32(a, x, backend=backend, workers=t).tobytes() == base.tobytes()
