#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--users N] [--domains N]
                                       [--nnz-per-row N] [--rank M] [--k K]
                                       [--repeats R]

Times every kernel in usertopics._kernels in both variants on
synthetic-scale data and prints a speedup table. The first numba call per
kernel compiles (cached afterwards); compilation happens before timing.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from usertopics import _kernels


def make_csr(rng, n_rows, n_cols, nnz_per_row):
    cols = np.sort(
        np.array(
            [rng.choice(n_cols, size=nnz_per_row, replace=False) for _ in range(n_rows)]
        ),
        axis=1,
    ).ravel()
    data = rng.uniform(1.0, 1e6, size=cols.size)
    indptr = np.arange(0, cols.size + 1, nnz_per_row, dtype=np.int64)
    return indptr, cols.astype(np.int64), data


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=5000)
    parser.add_argument("--domains", type=int, default=1000)
    parser.add_argument("--nnz-per-row", type=int, default=40)
    parser.add_argument("--rank", type=int, default=90)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    indptr, indices, data = make_csr(rng, args.users, args.domains, args.nnz_per_row)
    block = np.ascontiguousarray(rng.standard_normal((args.domains, args.rank)))
    tall = np.ascontiguousarray(rng.standard_normal((args.users, args.rank)))
    points = np.ascontiguousarray(rng.standard_normal((args.users, args.rank)))
    centroids = np.ascontiguousarray(points[: args.k].copy())
    labels = rng.integers(0, args.k, size=args.users).astype(np.int64)
    dsq = np.full(args.users, np.inf)

    cases = [
        ("tf_values", lambda f: f(indptr, data, 1.0)),
        ("share_values", lambda f: f(indptr, data)),
        ("csr_matmat", lambda f: f(indptr, indices, data, block)),
        ("csr_tmatmat", lambda f: f(indptr, indices, data, args.domains, tall)),
        ("kmeans_assign", lambda f: f(points, centroids)),
        ("kmeans_update", lambda f: f(points, labels, args.k)),
        ("dsq_update", lambda f: f(points, centroids[0], dsq.copy())),
    ]

    print(
        f"shape {args.users}x{args.domains}, {args.nnz_per_row} nnz/row, "
        f"rank {args.rank}, k {args.k}, median of {args.repeats}"
    )
    if not _kernels.HAVE_NUMBA:
        print("numba not importable: timing numpy fallbacks only")
    header = f"{'kernel':<15} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        fn_np = getattr(_kernels, f"{name}_np")
        t_np = timeit(lambda: call(fn_np), args.repeats)
        if _kernels.HAVE_NUMBA:
            fn_nb = getattr(_kernels, f"{name}_nb")
            call(fn_nb)  # compile before timing
            t_nb = timeit(lambda: call(fn_nb), args.repeats)
            print(
                f"{name:<15} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} "
                f"{t_np / t_nb:>8.1f}x"
            )
        else:
            print(f"{name:<15} {t_np * 1e3:>12.2f} {'-':>12} {'-':>9}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
