#!/usr/bin/env python3
"""Benchmark the compiled simulation kernels against the NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--n-paths 4000] [--horizon 1000] [--populations 8]

Both backends consume identical noise arrays and must produce identical
output; the benchmark reports wall time and the speedup ratio.
"""

import argparse
import time

import numpy as np

from minrev import _kernels_py

try:
    from minrev import _kernels
except ImportError:
    _kernels = None


def time_call(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-paths", type=int, default=4000)
    parser.add_argument("--horizon", type=int, default=1000)
    parser.add_argument("--populations", type=int, default=8)
    args = parser.parse_args()

    n, H, C = args.n_paths, args.horizon, args.populations
    rng = np.random.default_rng(0)
    w = rng.standard_normal((n, H, C + 1))
    kappa0 = np.zeros(C)
    mu = np.zeros(C)
    zeta = np.zeros(C)
    lam = np.full(C, 0.1)
    sigma = np.ones(C)
    rho = np.zeros(C)
    sq = np.sqrt(1 - rho**2)
    burn = H // 4
    mid = burn + (H - burn) // 2

    backends = [("numpy fallback", _kernels_py)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels))
    else:
        print("compiled extension not available; timing the fallback only")

    print(f"workload: {n} paths x {H} steps x {C} populations\n")
    results = {}
    for label, mod in backends:
        out = np.empty((n, H + 1, C))
        t_fill = time_call(mod.fill_paths, w, kappa0, kappa0, mu, zeta, lam, sigma, rho, sq, out)
        stats = np.empty((n, 5))
        t_stats = time_call(mod.extremal_stats, w, kappa0, kappa0, mu, zeta, lam, sigma, rho, sq, burn, mid, stats)
        results[label] = (t_fill, t_stats, out.copy(), stats.copy())
        print(f"{label:>16}:  fill_paths {t_fill * 1e3:8.1f} ms   extremal_stats {t_stats * 1e3:8.1f} ms")

    if len(results) == 2:
        (cf, cs, co, cst) = results["cython"]
        (pf, ps, po, pst) = results["numpy fallback"]
        identical = np.array_equal(co, po) and np.array_equal(cst, pst)
        print(f"\nspeedup:  fill_paths x{pf / cf:.1f}   extremal_stats x{ps / cs:.1f}")
        print(f"outputs bit-identical: {identical}")


if __name__ == "__main__":
    main()
