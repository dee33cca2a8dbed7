"""Benchmark the numba and pure-numpy paths of the two hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeats 20]

The cosine scan is timed at the shipped corpus scale (1k docs) and at 50x
that; the subset-union popcount at cov@k's exhaustive ceiling (10k subsets).
RAGVV_FORCE_NUMPY only affects the dispatch used by the package; here both
implementations are called directly.
"""
import argparse
import time

import numpy as np

from ragvv import kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_cosine(n_docs, dim, repeats):
    rng = np.random.Generator(np.random.PCG64(7))
    matrix = rng.normal(size=(n_docs, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    norms = np.linalg.norm(matrix, axis=1)
    query = rng.normal(size=dim)
    qnorm = float(np.linalg.norm(query))

    rows = []
    t_np = timeit(lambda: kernels.cosine_scores_numpy(matrix, query, norms, qnorm), repeats)
    rows.append(("numpy", t_np))
    if kernels.cosine_scores_numba is not None:
        mat_c = np.ascontiguousarray(matrix)
        q_c = np.ascontiguousarray(query)
        kernels.cosine_scores_numba(mat_c, q_c, norms, qnorm)  # compile
        t_nb = timeit(lambda: kernels.cosine_scores_numba(mat_c, q_c, norms, qnorm), repeats)
        rows.append(("numba", t_nb))
    return rows


def bench_unions(n_tests, width, n_subsets, k, repeats):
    rng = np.random.Generator(np.random.PCG64(11))
    sets = [
        frozenset(int(x) + 1 for x in rng.choice(width, size=width // 3, replace=False))
        for _ in range(n_tests)
    ]
    packed = kernels.pack_bitmap(sets, width)
    subsets = np.stack(
        [rng.choice(n_tests, size=k, replace=False) for _ in range(n_subsets)]
    ).astype(np.int64)

    rows = []
    t_np = timeit(lambda: kernels.subset_union_counts_numpy(packed, subsets), repeats)
    rows.append(("numpy", t_np))
    if kernels.subset_union_counts_numba is not None:
        kernels.subset_union_counts_numba(packed, subsets)  # compile
        t_nb = timeit(lambda: kernels.subset_union_counts_numba(packed, subsets), repeats)
        rows.append(("numba", t_nb))
    return rows


def report(title, rows):
    print(f"\n{title}")
    base = rows[0][1]
    for name, seconds in rows:
        speedup = base / seconds if seconds else float("inf")
        print(f"  {name:>6}: {seconds * 1e6:10.1f} us   ({speedup:5.2f}x vs numpy)")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    print(f"numba available: {kernels.HAS_NUMBA}; package dispatch uses numba: {kernels.USE_NUMBA}")
    report("cosine scan, 1,000 docs x 384 dims", bench_cosine(1000, 384, args.repeats))
    report("cosine scan, 50,000 docs x 384 dims", bench_cosine(50_000, 384, args.repeats))
    report(
        "subset-union popcount, 20 tests x 500 bits, 10,000 subsets of 5",
        bench_unions(20, 500, 10_000, 5, args.repeats),
    )
    report(
        "subset-union popcount, 40 tests x 2,000 bits, 10,000 subsets of 10",
        bench_unions(40, 2_000, 10_000, 10, args.repeats),
    )


if __name__ == "__main__":
    main()
