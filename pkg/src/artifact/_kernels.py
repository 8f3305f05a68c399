"""Inner loops shared by the estimator, diagnostics and packing code.

Every kernel has a numba ``@njit`` version and a pure-numpy version with
identical results (same summation order).  The numba path is used when numba
imports cleanly and ``ARTIFACT_DISABLE_NUMBA`` is unset or ``0``.
"""

import os

import numpy as np

_DISABLED = os.environ.get("ARTIFACT_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by ARTIFACT_DISABLE_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# --- numpy reference implementations -------------------------------------

def accumulate_numpy(rows, cols, weights, m1, m2):
    flat = rows.astype(np.int64) * m2 + cols.astype(np.int64)
    out = np.bincount(flat, weights=weights, minlength=m1 * m2)
    return out.reshape(m1, m2)


def count_numpy(rows, cols, m1, m2):
    flat = rows.astype(np.int64) * m2 + cols.astype(np.int64)
    return np.bincount(flat, minlength=m1 * m2).reshape(m1, m2)


def min_hamming_numpy(candidate, codes, k):
    if k == 0:
        return candidate.shape[0] + 1
    return int(np.min(np.count_nonzero(codes[:k] != candidate, axis=1)))


def pairwise_hamming_numpy(codes):
    return np.count_nonzero(codes[:, None, :] != codes[None, :, :], axis=2).astype(np.int64)


# --- numba versions -------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def accumulate_numba(rows, cols, weights, m1, m2):
        out = np.zeros((m1, m2))
        for i in range(rows.shape[0]):
            out[rows[i], cols[i]] += weights[i]
        return out

    @njit(cache=True)
    def count_numba(rows, cols, m1, m2):
        out = np.zeros((m1, m2), dtype=np.int64)
        for i in range(rows.shape[0]):
            out[rows[i], cols[i]] += 1
        return out

    @njit(cache=True)
    def min_hamming_numba(candidate, codes, k):
        best = candidate.shape[0] + 1
        for i in range(k):
            d = 0
            for j in range(candidate.shape[0]):
                if codes[i, j] != candidate[j]:
                    d += 1
            if d < best:
                best = d
        return best

    @njit(cache=True)
    def pairwise_hamming_numba(codes):
        k, length = codes.shape
        out = np.zeros((k, k), dtype=np.int64)
        for a in range(k):
            for b in range(a + 1, k):
                d = 0
                for j in range(length):
                    if codes[a, j] != codes[b, j]:
                        d += 1
                out[a, b] = d
                out[b, a] = d
        return out


def _as_index(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def accumulate(rows, cols, weights, m1, m2, backend=None):
    """Sum ``weights[i]`` into cell ``(rows[i], cols[i])`` of an ``m1 x m2`` zero matrix."""
    rows, cols = _as_index(rows), _as_index(cols)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if (backend or BACKEND) == "numba":
        return accumulate_numba(rows, cols, weights, int(m1), int(m2))
    return accumulate_numpy(rows, cols, weights, int(m1), int(m2))


def count(rows, cols, m1, m2, backend=None):
    rows, cols = _as_index(rows), _as_index(cols)
    if (backend or BACKEND) == "numba":
        return count_numba(rows, cols, int(m1), int(m2))
    return count_numpy(rows, cols, int(m1), int(m2))


def min_hamming(candidate, codes, k, backend=None):
    """Smallest Hamming distance between ``candidate`` and the first ``k`` rows of ``codes``."""
    candidate = np.ascontiguousarray(candidate, dtype=np.uint8)
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if (backend or BACKEND) == "numba":
        return int(min_hamming_numba(candidate, codes, int(k)))
    return min_hamming_numpy(candidate, codes, int(k))


def pairwise_hamming(codes, backend=None):
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if (backend or BACKEND) == "numba":
        return pairwise_hamming_numba(codes)
    return pairwise_hamming_numpy(codes)
