"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from hesitator import _kernels_py as py

try:
    from hesitator import _kernels as cy
except ImportError:
    cy = None


def cases(rng):
    m = rng.random((12, 10))
    w = rng.dirichlet(np.ones(10))
    pts = rng.random((2000, 1))
    ranks = np.arange(2, 2 * 25 + 1, 2, dtype=np.int64)
    return {
        "wadd_scores 12x10": lambda mod: mod.wadd_scores(m, w),
        "dominance_profile 12x10": lambda mod: mod.dominance_profile(m),
        "signed_rank_null n=25": lambda mod: mod.signed_rank_null(ranks),
        "sq_distances 2000x1": lambda mod: mod.sq_distances(pts, pts[0]),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.repeat, repeat=3)) / args.repeat * 1e6
        if cy is None:
            print(f"{name:<26}{t_py:>14.1f}{'n/a':>14}{'':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{name:<26}{t_py:>14.1f}{t_cy:>14.1f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
