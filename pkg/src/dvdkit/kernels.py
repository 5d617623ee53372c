"""Backend selection for the hot kernels.

``dvdkit._kernels`` (Cython) is used when it was built; otherwise the numpy
implementations below are used. Set ``DVDKIT_BACKEND=python`` to force the
fallback.
"""
from __future__ import annotations

import os

import numpy as np

from .core import Rng

MAC_DIM = 64


def _py_mac_work(units: int, mat: np.ndarray, bias: np.ndarray) -> float:
    x = np.zeros(MAC_DIM)
    for _ in range(int(units)):
        x = mat @ x + bias
    return float(x.sum())


def _py_bf16_encode_f32(bits: np.ndarray) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint32)
    is_nan = ((b & 0x7F800000) == 0x7F800000) & ((b & 0x007FFFFF) != 0)
    lsb = (b >> 16) & 1
    # uint64 so the rounding add cannot wrap
    rounded = ((b.astype(np.uint64) + 0x7FFF + lsb) >> 16).astype(np.uint16)
    qnan = (((b >> 16) & 0x8000) | 0x7FC0).astype(np.uint16)
    return np.where(is_nan, qnan, rounded)


def _py_bf16_decode_bits(bits: np.ndarray) -> np.ndarray:
    return np.asarray(bits, dtype=np.uint16).astype(np.uint32) << 16


_PY = {
    "mac_work": _py_mac_work,
    "bf16_encode_f32": _py_bf16_encode_f32,
    "bf16_decode_bits": _py_bf16_decode_bits,
}

try:
    if os.environ.get("DVDKIT_BACKEND", "").lower() == "python":
        raise ImportError("forced python backend")
    from . import _kernels as _ext

    BACKEND = "cython"
    _IMPL = {name: getattr(_ext, name) for name in _PY}
except ImportError:
    _ext = None
    BACKEND = "python"
    _IMPL = dict(_PY)


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ext is not None else [])


def get_impl(name: str, backend: str | None = None):
    if backend is None:
        return _IMPL[name]
    if backend == "python":
        return _PY[name]
    if backend == "cython" and _ext is not None:
        return getattr(_ext, name)
    raise ValueError(f"backend {backend!r} not available")


_WORK_MATRIX: tuple[np.ndarray, np.ndarray] | None = None


def work_operands() -> tuple[np.ndarray, np.ndarray]:
    """Fixed contraction (spectral radius < 1) driving the work kernel."""
    global _WORK_MATRIX
    if _WORK_MATRIX is None:
        g = Rng(0x5EED).generator()
        mat = g.standard_normal((MAC_DIM, MAC_DIM)) / (2.0 * np.sqrt(MAC_DIM))
        bias = g.standard_normal(MAC_DIM) * 0.1
        _WORK_MATRIX = (np.ascontiguousarray(mat), np.ascontiguousarray(bias))
    return _WORK_MATRIX


def burn(units: int, backend: str | None = None) -> float:
    """Perform ``units`` work units of genuine dense MAC compute.

    One unit is a 64x64 matrix-vector product plus bias (4096 MACs).
    """
    if units <= 0:
        return 0.0
    mat, bias = work_operands()
    return get_impl("mac_work", backend)(int(units), mat, bias)


def bf16_encode_f32(bits: np.ndarray, backend: str | None = None) -> np.ndarray:
    return get_impl("bf16_encode_f32", backend)(np.ascontiguousarray(bits, dtype=np.uint32))


def bf16_decode_bits(bits: np.ndarray, backend: str | None = None) -> np.ndarray:
    return get_impl("bf16_decode_bits", backend)(np.ascontiguousarray(bits, dtype=np.uint16))
