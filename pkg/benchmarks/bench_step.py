#!/usr/bin/env python3
"""Benchmark the compiled lattice step kernel against the pure-numpy fallback.

Runs the same step contract through both backends on a few grid sizes and
reports microseconds per step plus the speedup, and verifies along the way
that the two backends produce bit-identical fields. Use --quick for a
shorter measurement window.

    python benchmarks/bench_step.py [--quick]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import nbspatial
from nbspatial import _step_py
from nbspatial.lattice import ModelParams, _kernel_args, _StepBuffers, seed_random

try:
    from nbspatial import _stepc
except ImportError:
    _stepc = None

SIZES = ((64, 64), (256, 256), (768, 512))


def time_backend(kernel, x, y, params, seconds: float) -> float:
    rows, cols = x.shape
    buf = _StepBuffers(rows, cols)
    args = _kernel_args(rows, cols, params)
    out_x = np.empty_like(x)
    out_y = np.empty_like(y)
    e = np.empty_like(y)

    def one_step():
        np.negative(y, out=e)
        np.exp(e, out=e)
        kernel(x, e, params.lam, params.mu_x, params.mu_y, *args,
               buf.tx, buf.ty, out_x, out_y)

    one_step()  # warm up
    t0 = time.perf_counter()
    n = 0
    while time.perf_counter() - t0 < seconds:
        one_step()
        n += 1
    return (time.perf_counter() - t0) / n


def check_identical(x, y, params) -> bool:
    rows, cols = x.shape
    args = _kernel_args(rows, cols, params)
    outs = []
    for kernel in (_stepc.step_kernel, _step_py.step_kernel):
        buf = _StepBuffers(rows, cols)
        ox, oy = np.empty_like(x), np.empty_like(y)
        e = np.exp(-y)
        kernel(x, e, params.lam, params.mu_x, params.mu_y, *args, buf.tx, buf.ty, ox, oy)
        outs.append((ox, oy))
    return all(a.tobytes() == b.tobytes() for a, b in zip(outs[0], outs[1]))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="0.3s per measurement")
    args = parser.parse_args()
    seconds = 0.3 if args.quick else 2.0

    print(f"active backend: {nbspatial.active_backend()}")
    if _stepc is None:
        print("compiled extension not available; benchmarking the fallback only")

    params = ModelParams(2.0, 0.6, 0.8)
    print(f"{'grid':>10} {'compiled':>12} {'numpy':>12} {'speedup':>9}  bit-identical")
    for rows, cols in SIZES:
        state = seed_random(rows, cols, params, rng_seed=1)
        state = nbspatial.relax(state, params, 200)
        x, y = state.x.copy(), state.y.copy()
        t_py = time_backend(_step_py.step_kernel, x, y, params, seconds)
        if _stepc is not None:
            t_c = time_backend(_stepc.step_kernel, x, y, params, seconds)
            same = check_identical(x, y, params)
            print(f"{rows}x{cols:<6} {t_c * 1e6:9.1f} us {t_py * 1e6:9.1f} us "
                  f"{t_py / t_c:8.2f}x  {same}")
        else:
            print(f"{rows}x{cols:<6} {'-':>12} {t_py * 1e6:9.1f} us")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
