#!/usr/bin/env python3
"""Compare the compiled PAVA kernel against the pure-Python fallback.

Times the raw kernel on chains of growing length and an end-to-end
unregularised fit on a group ordering.  Force the pure path for the whole
process with ORDERBIAS_PURE=1 to cross-check numbers from a single backend.
"""

from __future__ import annotations

import time

import numpy as np

from orderbias import ObservationSet, RatingMatrix, fit_at_zero, generate_bias, synthesize
from orderbias._kernels import HAVE_COMPILED, backend, pure
from orderbias.harness import equal_groups_order


def time_call(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel() -> None:
    try:
        from orderbias._kernels import _pavac
    except ImportError:
        _pavac = None
    rng = np.random.default_rng(0)
    print(f"active backend: {backend()}")
    print(f"{'n':>8} {'pure (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}")
    for n in (100, 1_000, 10_000, 100_000):
        v = np.ascontiguousarray(rng.normal(size=n))
        w = np.ones(n)
        t_pure = time_call(pure.pava, v, w)
        if _pavac is not None:
            t_c = time_call(_pavac.pava, v, w)
            print(f"{n:>8} {t_pure * 1e3:>12.3f} {t_c * 1e3:>14.3f} {t_pure / t_c:>8.1f}x")
        else:
            print(f"{n:>8} {t_pure * 1e3:>12.3f} {'-':>14} {'-':>8}")


def bench_fit() -> None:
    rng = np.random.default_rng(1)
    d, n = 3, 300
    order = equal_groups_order(d, n, 3)
    obs = ObservationSet.full(d, n)
    bias = generate_bias(order, obs, 1.0, rng)
    y = synthesize(np.zeros(d), bias, RatingMatrix.zeros(obs))
    t = time_call(lambda: fit_at_zero(y, order), repeats=3)
    print(f"\nend-to-end unregularised fit (d={d}, n={n}, backend={backend()}): "
          f"{t * 1e3:.0f} ms")
    if not HAVE_COMPILED:
        print("(compiled kernel unavailable; build with `python setup.py build_ext --inplace`)")


if __name__ == "__main__":
    bench_kernel()
    bench_fit()
