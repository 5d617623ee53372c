"""BF16 codec.

Values go float64 -> float32 (IEEE rounding) -> BF16 by rounding away the
low 16 bits to nearest-even. NaNs collapse to the canonical quiet NaN
(sign kept) so equal inputs always produce equal bytes.
"""
from __future__ import annotations

import struct

import numpy as np

from .. import kernels

_F32 = struct.Struct("<f")
_U32 = struct.Struct("<I")


def _f32_bits(x: float) -> int:
    with np.errstate(over="ignore"):
        return int(np.float32(x).view(np.uint32))


def bf16_encode(x: float) -> int:
    bits = _f32_bits(x)
    if (bits & 0x7F800000) == 0x7F800000 and (bits & 0x007FFFFF):
        return ((bits >> 16) & 0x8000) | 0x7FC0
    lsb = (bits >> 16) & 1
    return ((bits + 0x7FFF + lsb) >> 16) & 0xFFFF


def bf16_decode(bits: int) -> float:
    return _F32.unpack(_U32.pack((bits & 0xFFFF) << 16))[0]


def bf16_encode_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    with np.errstate(over="ignore"):
        f32 = arr.astype(np.float32)
    return kernels.bf16_encode_f32(f32.view(np.uint32))


def bf16_decode_array(bits) -> np.ndarray:
    wide = kernels.bf16_decode_bits(np.asarray(bits, dtype=np.uint16).ravel())
    return wide.view(np.float32).astype(np.float64)


def bf16_round_trip(values) -> np.ndarray:
    """What the receiving side sees after one trip over the wire."""
    arr = np.asarray(values, dtype=np.float64)
    return bf16_decode_array(bf16_encode_array(arr)).reshape(arr.shape)
