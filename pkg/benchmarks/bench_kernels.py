"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from qgl import _kernels_py

try:
    from qgl import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    lengths = rng.uniform(0.8, 1.2, 258)
    energies = np.linspace(0.5, 6.0, 6)
    diag = rng.normal(size=2000)
    off = rng.normal(size=1999)
    shifts = np.linspace(-4.0, 4.0, 64)
    return {
        "chain_counts (258 edges x 6 energies)": lambda k: k.chain_counts(lengths, 1.0, energies),
        "sturm_counts (n=2000 x 64 shifts)": lambda k: k.sturm_counts(diag, off, shifts),
        "sturm_count (n=2000, one shift)": lambda k: k.sturm_count(diag, off, 0.3),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        py = min(timeit.repeat(lambda: call(_kernels_py), number=max(1, args.repeat // 20), repeat=3))
        py /= max(1, args.repeat // 20)
        if _kernels is None:
            print(f"{name:42s} {1e3 * py:11.3f} {'n/a':>12s} {'n/a':>8s}")
            continue
        assert np.array_equal(np.asarray(call(_kernels_py)), np.asarray(call(_kernels)))
        cy = min(timeit.repeat(lambda: call(_kernels), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:42s} {1e3 * py:11.3f} {1e3 * cy:12.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
