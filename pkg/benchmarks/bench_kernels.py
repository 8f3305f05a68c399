#!/usr/bin/env python3
"""Time the numba and numpy kernel backends on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are importable in one process (the env flag only picks the
default), so each kernel is called with an explicit ``backend=``.
"""

import argparse
import timeit

import numpy as np

from artifact import _kernels


def cases(rng):
    m1, m2, n = 200, 300, 2_000_000
    rows = rng.integers(0, m1, n)
    cols = rng.integers(0, m2, n)
    w = rng.standard_normal(n)
    codes = rng.integers(0, 2, (400, 256), dtype=np.uint8)
    cand = rng.integers(0, 2, 256, dtype=np.uint8)
    return {
        "accumulate (n=2e6)": lambda b: _kernels.accumulate(rows, cols, w, m1, m2, backend=b),
        "count (n=2e6)": lambda b: _kernels.count(rows, cols, m1, m2, backend=b),
        "min_hamming (400x256)": lambda b: _kernels.min_hamming(cand, codes, 400, backend=b),
        "pairwise_hamming (400x256)": lambda b: _kernels.pairwise_hamming(codes, backend=b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba backend unavailable (disabled or not installed); timing numpy only")
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases(rng).items():
        times = {}
        for b in backends:
            fn(b)  # warm-up / compile
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        same = len(backends) < 2 or np.array_equal(np.asarray(fn("numpy")), np.asarray(fn("numba")))
        speed = f"{times['numpy'] / times['numba']:8.1f}x" if "numba" in times else "       -"
        cols = " ".join(f"{1e3 * times[b]:10.2f}ms" for b in backends)
        print(f"{name:28s} {cols} {speed}{'' if same else '  MISMATCH'}")


if __name__ == "__main__":
    main()
