#!/usr/bin/env python3
"""Throughput comparison of the assignment-pool backends.

Times candidate generation plus balance-statistic evaluation for the pool
sizes the quantile rule actually uses, on both the compiled kernel and the
NumPy fallback.

Usage: python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from targetbalance._backend import available_backends
from targetbalance.randomization import WeightedCovariates

CASES = [
    # (n, d, pool candidates)
    (200, 3, 400),
    (1000, 10, 10_000),
    (5000, 10, 10_000),
]


def time_pool(backend, metric, k, repeats):
    best = float("inf")
    for rep in range(repeats):
        state = backend.make_state(1234 + rep)
        t0 = time.perf_counter()
        done = 0
        while done < k:
            block = min(4096, k - done)
            _, u = backend.candidate_block(metric.cols, block, state)
            metric.values_from_u(u)
            done += block
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'n':>6} {'d':>3} {'K':>7}"
    for name in backends:
        header += f" {name + ' [s]':>14}"
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)

    rng = np.random.default_rng(0)
    for n, d, k in CASES:
        x = rng.standard_normal((n, d)) + 1.0
        w = np.exp(0.3 * rng.standard_normal(n))
        metric = WeightedCovariates(x, w).metric("target")
        row = f"{n:>6} {d:>3} {k:>7}"
        times = {}
        for name, backend in backends.items():
            times[name] = time_pool(backend, metric, k, args.repeats)
            row += f" {times[name]:>14.4f}"
        if len(times) == 2:
            row += f" {times['python'] / times['compiled']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
