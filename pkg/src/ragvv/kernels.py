"""Hot numeric kernels, compiled with numba when available.

Two inner loops dominate desk-scale runs once LLM calls are scripted: the
brute-force cosine scan over the document matrix, and the subset-union
popcounts behind cov@k. Both carry a numba @njit implementation and a pure
numpy fallback; benchmarks/bench_kernels.py times the paths against each
other. Per those measurements the popcount kernel dispatches to numba
(10-16x faster) while the cosine scan stays on numpy (BLAS wins). Set
RAGVV_FORCE_NUMPY=1 to force the numpy fallback everywhere; the numpy path
is also selected automatically when numba is not importable. Dispatch is
decided once at import.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = [
    "HAS_NUMBA",
    "USE_NUMBA",
    "cosine_scores",
    "subset_union_counts",
    "pack_bitmap",
    "cosine_scores_numpy",
    "subset_union_counts_numpy",
    "cosine_scores_numba",
    "subset_union_counts_numba",
]

_FORCE_NUMPY = os.environ.get("RAGVV_FORCE_NUMPY", "0") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY


def cosine_scores_numpy(matrix: np.ndarray, query: np.ndarray,
                        row_norms: np.ndarray, query_norm: float) -> np.ndarray:
    return (matrix @ query) / (row_norms * query_norm)


def subset_union_counts_numpy(packed: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Popcount of the OR-union of the selected bitmap rows, per subset.

    packed: (n_rows, n_words) uint64 bitmaps; subsets: (n_subsets, k) row
    indices. Returns int64 counts of shape (n_subsets,).
    """
    gathered = packed[subsets]                       # (n_subsets, k, n_words)
    unions = np.bitwise_or.reduce(gathered, axis=1)  # (n_subsets, n_words)
    bits = np.unpackbits(unions.view(np.uint8), axis=1)
    return bits.sum(axis=1).astype(np.int64)


if HAS_NUMBA:

    @njit(cache=True)
    def cosine_scores_numba(matrix, query, row_norms, query_norm):  # pragma: no cover - jit
        n, d = matrix.shape
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * query[j]
            out[i] = acc / (row_norms[i] * query_norm)
        return out

    @njit(cache=True)
    def subset_union_counts_numba(packed, subsets):  # pragma: no cover - jit
        n_subsets, k = subsets.shape
        n_words = packed.shape[1]
        out = np.zeros(n_subsets, dtype=np.int64)
        for s in range(n_subsets):
            total = 0
            for w in range(n_words):
                acc = np.uint64(0)
                for j in range(k):
                    acc |= packed[subsets[s, j], w]
                while acc:  # Kernighan popcount
                    acc &= acc - np.uint64(1)
                    total += 1
            out[s] = total
        return out

else:  # pragma: no cover - environment without numba
    cosine_scores_numba = None
    subset_union_counts_numba = None


def cosine_scores(matrix, query, row_norms, query_norm):
    # BLAS matvec beats the jitted loop 2-4x at every size benchmarked
    # (see benchmarks/bench_kernels.py), so the scan always takes the
    # numpy path; the numba variant stays for the benchmark comparison.
    return cosine_scores_numpy(matrix, query, row_norms, query_norm)


def subset_union_counts(packed, subsets):
    subsets = np.ascontiguousarray(subsets, dtype=np.int64)
    if USE_NUMBA:
        return subset_union_counts_numba(np.ascontiguousarray(packed), subsets)
    return subset_union_counts_numpy(packed, subsets)


def pack_bitmap(covered_sets: list, width: int) -> np.ndarray:
    """Pack 1-based index sets into a (n_rows, ceil(width/64)) uint64 matrix."""
    n_words = max(1, -(-width // 64))
    out = np.zeros((len(covered_sets), n_words), dtype=np.uint64)
    for row, covered in enumerate(covered_sets):
        for idx in covered:
            if not 1 <= idx <= width:
                raise ValueError(f"bit index {idx} outside [1, {width}]")
            bit = idx - 1
            out[row, bit // 64] |= np.uint64(1) << np.uint64(bit % 64)
    return out
