#!/usr/bin/env python3
"""Benchmark the balancing-walk kernel: numba-compiled vs pure numpy.

Runs the same walks through the compiled kernel and its interpreted twin,
checks the outputs are bit-identical, and prints a timing table.

    python benchmarks/bench_flight.py [--reps 50]

To benchmark a process-wide interpreted build instead, set
CUBERAND_DISABLE_NUMBA=1 before importing cuberand (this script then only
times the interpreted path).
"""

import argparse
import time

import numpy as np

from cuberand import _kernels
from cuberand.rng import stream


def make_instance(n, p, seed):
    g = stream(seed, "bench", n, p)
    x = g.random((n, p))
    z = np.vstack([np.ones(n), x.T])
    a = np.ascontiguousarray(2.0 * z)
    pi = np.full(n, 0.5)
    uniforms = g.random(n + a.shape[0] + 2)
    return a, pi, uniforms


def run_walk(fn, a, pi, uniforms):
    work_pi = pi.copy()
    frozen = np.zeros(pi.size, dtype=np.bool_)
    out = fn(a, work_pi, frozen, uniforms, 0, 1e-9, 1e-10)
    return out, work_pi, frozen


def time_fn(fn, a, pi, uniforms, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        run_walk(fn, a, pi, uniforms)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args()

    grid = [(200, 2), (500, 5), (500, 10), (500, 30), (2000, 10)]
    if _kernels.NUMBA_ENABLED:
        compiled = _kernels.flight_walk
        interpreted = _kernels.flight_walk.py_func
        print("numba: enabled (set CUBERAND_DISABLE_NUMBA=1 for a numpy-only build)")
    else:
        compiled = None
        interpreted = _kernels.flight_walk
        print("numba: disabled; timing the interpreted kernel only")

    print(f"{'n':>6} {'p':>4} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for n, p in grid:
        a, pi, uniforms = make_instance(n, p, seed=1234)
        run_walk(interpreted, a, pi, uniforms)  # warm allocator and caches
        t_py = time_fn(interpreted, a, pi, uniforms, max(1, args.reps // 10))
        if compiled is not None:
            run_walk(compiled, a, pi, uniforms)  # compile before timing
            t_nb = time_fn(compiled, a, pi, uniforms, args.reps)
            out_c, pi_c, fr_c = run_walk(compiled, a, pi, uniforms)
            out_i, pi_i, fr_i = run_walk(interpreted, a, pi, uniforms)
            assert out_c == out_i and np.array_equal(pi_c, pi_i) and np.array_equal(fr_c, fr_i), \
                "compiled and interpreted walks disagree"
            print(f"{n:>6} {p:>4} {t_py * 1e3:>12.3f} {t_nb * 1e3:>12.3f} {t_py / t_nb:>8.1f}x")
        else:
            print(f"{n:>6} {p:>4} {t_py * 1e3:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
