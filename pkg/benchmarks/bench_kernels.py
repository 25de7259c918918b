"""Benchmark the compiled GRU sequence kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--batch 100] [--steps 10] [--reps 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from socialnav.net import _kernels_py

try:
    from socialnav.net import _kernels_cy
except ImportError:
    _kernels_cy = None


def make_inputs(rng, batch, steps, dim_in=7, hidden=20):
    w = lambda *s: rng.standard_normal(s) * 0.1
    weights = (w(hidden, dim_in), w(hidden, dim_in), w(hidden, dim_in),
               w(hidden, hidden), w(hidden, hidden), w(hidden, hidden),
               w(hidden), w(hidden), w(hidden))
    x = rng.standard_normal((batch, steps, dim_in))
    h0 = rng.standard_normal((batch, hidden))
    return weights, x, h0


def bench(mod, weights, x, h0, reps):
    hs, cache = mod.gru_seq_forward(*weights, x, h0)
    dhs = np.ones_like(hs)
    t0 = time.perf_counter()
    for _ in range(reps):
        hs, cache = mod.gru_seq_forward(*weights, x, h0)
    t_fwd = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    for _ in range(reps):
        mod.gru_seq_backward(*weights, cache, dhs)
    t_bwd = (time.perf_counter() - t0) / reps
    return t_fwd, t_bwd, hs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=100)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--reps", type=int, default=50)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    weights, x, h0 = make_inputs(rng, args.batch, args.steps)

    py_fwd, py_bwd, hs_py = bench(_kernels_py, weights, x, h0, args.reps)
    print(f"numpy   : forward {py_fwd * 1e3:8.3f} ms  backward {py_bwd * 1e3:8.3f} ms")
    if _kernels_cy is None:
        print("compiled kernels unavailable (extension not built)")
        return
    cy_fwd, cy_bwd, hs_cy = bench(_kernels_cy, weights, x, h0, args.reps)
    print(f"compiled: forward {cy_fwd * 1e3:8.3f} ms  backward {cy_bwd * 1e3:8.3f} ms")
    print(f"speedup : forward {py_fwd / cy_fwd:7.2f}x  backward {py_bwd / cy_bwd:7.2f}x")
    print(f"max |diff| = {np.abs(hs_py - hs_cy).max():.3e}")


if __name__ == "__main__":
    main()
