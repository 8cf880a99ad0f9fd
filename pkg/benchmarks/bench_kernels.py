"""Benchmark the compiled distance kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the all-rows weighted distance scan (the hot loop of neighbor
retrieval) for both implementations across a few representative shapes,
and verifies they agree to near machine precision while doing so.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

import cot2.retrieval as retrieval
from cot2.retrieval import EUC_RW, MAN_RW, FeatureWeights, distances_to_all

SHAPES = [(500, 10), (2000, 20), (2000, 50), (10000, 50)]


def time_scan(rows, query, weights, repeats):
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        out = distances_to_all(rows, query, weights)
        times.append(time.perf_counter() - started)
    return statistics.median(times), out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if retrieval.kernel_in_use() != "compiled":
        print("compiled kernel unavailable (pure-python build); nothing to compare")
        return 0

    compiled = retrieval._kernels
    rng = np.random.default_rng(0)
    print(f"{'shape':>12} {'metric':>7} {'numpy (ms)':>11} {'compiled (ms)':>14} {'speedup':>8}")
    for n, d in SHAPES:
        rows = rng.normal(size=(n, d))
        query = rng.normal(size=d)
        for metric in (MAN_RW, EUC_RW):
            weights = FeatureWeights(rng.uniform(0.001, 1.0, d), metric)
            t_fast, out_fast = time_scan(rows, query, weights, args.repeats)
            retrieval._kernels = None
            try:
                t_numpy, out_numpy = time_scan(rows, query, weights, args.repeats)
            finally:
                retrieval._kernels = compiled
            assert np.allclose(out_fast, out_numpy, rtol=1e-12)
            print(
                f"{n:>7}x{d:<4} {metric:>7} {t_numpy * 1e3:>11.3f} "
                f"{t_fast * 1e3:>14.3f} {t_numpy / t_fast:>7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
