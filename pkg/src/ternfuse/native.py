"""Loader for the AVX-512/BMI2 kernel library.

The C source ships inside the package and is compiled on first use into a
per-user cache directory keyed by the source hash.  Anything that goes wrong
(non-x86 host, missing ISA extensions, no compiler) leaves :func:`available`
returning False and callers fall back to the portable numba kernels.
"""

from __future__ import annotations

import ctypes
import hashlib
import logging
import os
import platform
import shutil
import subprocess
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SOURCE = Path(__file__).with_name("_csrc") / "ternary_kernels.c"
CFLAGS = ["-O3", "-mavx512f", "-mbmi2", "-ffp-contract=off", "-fPIC", "-shared"]
REQUIRED_FLAGS = ("avx512f", "bmi2")

_u32 = np.ctypeslib.ndpointer(np.uint32, flags="C_CONTIGUOUS")
_u16 = np.ctypeslib.ndpointer(np.uint16, flags="C_CONTIGUOUS")
_f32 = np.ctypeslib.ndpointer(np.float32, flags="C_CONTIGUOUS")
_i64 = ctypes.c_int64


def cpu_flags() -> set[str]:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("flags"):
                    return set(line.split(":", 1)[1].split())
    except OSError:
        pass
    return set()


def _cache_dir() -> Path:
    for base in (os.path.expanduser("~/.cache"), tempfile.gettempdir()):
        path = Path(base) / "ternfuse"
        try:
            path.mkdir(parents=True, exist_ok=True)
            return path
        except OSError:
            continue
    raise RuntimeError("no writable cache directory for the kernel build")


def _compiler() -> str | None:
    for cc in ("cc", "gcc", "clang"):
        path = shutil.which(cc)
        if path:
            return path
    return None


def build(force: bool = False) -> Path:
    """Compile the kernel library (if needed) and return its path."""
    src = SOURCE.read_bytes()
    digest = hashlib.sha1(src + " ".join(CFLAGS).encode()).hexdigest()[:12]
    out = _cache_dir() / digest / "libternfuse.so"
    if out.exists() and not force:
        return out
    cc = _compiler()
    if cc is None:
        raise RuntimeError("no C compiler found")
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".so", dir=out.parent)
    os.close(fd)
    try:
        subprocess.run([cc, *CFLAGS, str(SOURCE), "-o", tmp], check=True, capture_output=True, text=True)
        os.replace(tmp, out)  # atomic, concurrent builders race harmlessly
    except subprocess.CalledProcessError as exc:
        raise RuntimeError(f"kernel build failed:\n{exc.stderr}") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return out


@lru_cache(maxsize=1)
def load() -> ctypes.CDLL | None:
    if platform.machine().lower() not in ("x86_64", "amd64"):
        log.debug("native kernels disabled: %s is not x86-64", platform.machine())
        return None
    missing = [f for f in REQUIRED_FLAGS if f not in cpu_flags()]
    if missing:
        log.debug("native kernels disabled: cpu lacks %s", ", ".join(missing))
        return None
    try:
        lib = ctypes.CDLL(str(build()))
    except (OSError, RuntimeError) as exc:
        log.warning("native kernels unavailable, using portable fallback: %s", exc)
        return None

    lib.tf_decode.argtypes = [_u32, _i64, _u16, _u16]
    lib.tf_decode.restype = None
    lib.tf_dense_gemv.argtypes = [_f32, _f32, _f32, _i64, _i64, _i64]
    lib.tf_dense_gemv.restype = None
    lib.tf_ternary_gemv.argtypes = [_u32, _f32, _f32, _i64, _i64, _i64, ctypes.c_float, ctypes.c_int]
    lib.tf_ternary_gemv.restype = None
    lib.tf_fused.argtypes = [_u32] * 4 + [_f32] * 5 + [_i64] * 3 + [_f32, ctypes.c_int]
    lib.tf_fused.restype = None
    return lib


def available() -> bool:
    return load() is not None


def _lib() -> ctypes.CDLL:
    lib = load()
    if lib is None:
        raise RuntimeError("native kernel library is not available on this host")
    return lib


def decode(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.ascontiguousarray(words, dtype=np.uint32)
    flat = w.reshape(-1)
    k_pos = np.empty(flat.size, dtype=np.uint16)
    k_neg = np.empty(flat.size, dtype=np.uint16)
    _lib().tf_decode(flat, flat.size, k_pos, k_neg)
    return k_pos.reshape(w.shape), k_neg.reshape(w.shape)


# Row-range entry points; same signatures as ternfuse._portable.

def dense_rows(a, x, y, r0, r1):
    _lib().tf_dense_gemv(a, x, y, a.shape[1], r0, r1)


def ternary_rows(words, x, y, r0, r1, scale, variant):
    _lib().tf_ternary_gemv(words, x, y, words.shape[1], r0, r1, scale, variant)


def fused_rows(ur, ui, wr, wi, xre, xim, xnim, yre, yim, r0, r1, scales, variant):
    _lib().tf_fused(ur, ui, wr, wi, xre, xim, xnim, yre, yim, ur.shape[1], r0, r1, scales, variant)
