"""Compiled vs fallback kernels: work-unit cost and BF16 codec throughput.

    python benchmarks/bench_kernels.py [--units 20000] [--values 1000000]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dvdkit import kernels


def best_of(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--units", type=int, default=20000)
    ap.add_argument("--values", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g = np.random.default_rng(0)
    f32 = g.standard_normal(args.values).astype(np.float32).view(np.uint32)
    b16 = kernels.bf16_encode_f32(f32, "python")
    rows = []
    for backend in kernels.available_backends():
        mac = best_of(lambda: kernels.burn(args.units, backend), args.repeat)
        enc = best_of(lambda: kernels.bf16_encode_f32(f32, backend), args.repeat)
        dec = best_of(lambda: kernels.bf16_decode_bits(b16, backend), args.repeat)
        rows.append((backend, mac / args.units * 1e6, args.values / enc / 1e6, args.values / dec / 1e6))
    # codec must agree bit for bit; the MAC loop only up to summation order
    if len(rows) > 1:
        assert np.array_equal(kernels.bf16_encode_f32(f32, "python"), kernels.bf16_encode_f32(f32, "cython"))
        assert np.isclose(kernels.burn(100, "python"), kernels.burn(100, "cython"), rtol=1e-9)
    print(f"{'backend':8}  {'us/work-unit':>12}  {'bf16 enc Mval/s':>15}  {'bf16 dec Mval/s':>15}")
    for name, us, enc, dec in rows:
        print(f"{name:8}  {us:12.3f}  {enc:15.1f}  {dec:15.1f}")
    if len(rows) > 1:
        print(f"cython speedup on the work kernel: {rows[0][1] / rows[1][1]:.2f}x")


if __name__ == "__main__":
    main()
