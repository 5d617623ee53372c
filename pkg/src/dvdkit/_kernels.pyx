# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the dense multiply-accumulate work kernel used to
model compute cost, and the BF16 array codec.

Every function here has a numpy twin in ``kernels.py``; both must agree.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint16_t, uint32_t

cnp.import_array()

DEF N = 64


def mac_work(long units, double[:, ::1] mat, double[::1] bias):
    """Run ``units`` dependent steps of x <- mat @ x + bias; return sum(x)."""
    cdef double x[N]
    cdef double y[N]
    cdef double mt[N * N]
    cdef long u
    cdef int i, j
    cdef double xj, total = 0.0
    if mat.shape[0] != N or mat.shape[1] != N or bias.shape[0] != N:
        raise ValueError("mac_work expects a 64x64 matrix and 64-vector bias")
    with nogil:
        # column-major copy so the inner loop runs over contiguous memory
        for i in range(N):
            x[i] = 0.0
            for j in range(N):
                mt[j * N + i] = mat[i, j]
        for u in range(units):
            for i in range(N):
                y[i] = bias[i]
            for j in range(N):
                xj = x[j]
                for i in range(N):
                    y[i] = y[i] + mt[j * N + i] * xj
            for i in range(N):
                x[i] = y[i]
        for i in range(N):
            total = total + x[i]
    return total


def bf16_encode_f32(const uint32_t[::1] bits):
    """Round float32 bit patterns to BF16 (nearest, ties to even)."""
    cdef Py_ssize_t n = bits.shape[0], k
    out = np.empty(n, dtype=np.uint16)
    cdef uint16_t[::1] o = out
    cdef uint32_t b, lsb
    with nogil:
        for k in range(n):
            b = bits[k]
            if (b & 0x7F800000u) == 0x7F800000u and (b & 0x007FFFFFu) != 0:
                o[k] = <uint16_t>(((b >> 16) & 0x8000u) | 0x7FC0u)
            else:
                lsb = (b >> 16) & 1u
                o[k] = <uint16_t>((b + 0x7FFFu + lsb) >> 16)
    return out


def bf16_decode_bits(const uint16_t[::1] bits):
    """Widen BF16 patterns to float32 bit patterns (low half zero)."""
    cdef Py_ssize_t n = bits.shape[0], k
    out = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = (<uint32_t>bits[k]) << 16
    return out
