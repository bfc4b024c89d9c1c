"""Numba vs numpy kernels on Monte Carlo-sized batches.

Usage: python3 benchmarks/bench_kernels.py [--reps 16384] [--repeat 5]

Times both paths of each kernel on the same input (after a warm-up call that
triggers JIT compilation), checks they agree, and prints the speedup.
"""

import argparse
import time

import numpy as np

from mlmoments import _accel


def best_of(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=16384, help="rows per batch (default: one MC block)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable (or MLMOMENTS_DISABLE_NUMBA is set); nothing to compare")

    rng = np.random.default_rng(0)
    cases = {
        "two-level J=(3,3,4)": (3, 3, 4),
        "two-level 20 groups": tuple(rng.integers(3, 12, size=20)),
        "three-level 9 subgroups": (3,) * 9,
        "wide: 200 groups": tuple(rng.integers(3, 8, size=200)),
    }
    print(f"{'kernel':<42}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, sizes in cases.items():
        x = rng.normal(size=(args.reps, int(sum(sizes))))
        off = _accel.offsets_from_sizes(sizes)
        a = _accel.grouped_central_sums(x, off, use_numba=True)
        b = _accel.grouped_central_sums(x, off, use_numba=False)
        assert all(np.allclose(u, v, rtol=1e-10, atol=1e-12) for u, v in zip(a, b))
        tn = best_of(lambda: _accel.grouped_central_sums(x, off, use_numba=True), args.repeat)
        tp = best_of(lambda: _accel.grouped_central_sums(x, off, use_numba=False), args.repeat)
        print(f"{'grouped_central_sums ' + name:<42}{tn * 1e3:>10.2f}{tp * 1e3:>10.2f}{tp / tn:>8.1f}x")

    for n in (4, 20, 100):
        d2 = rng.random((args.reps, n))
        assert np.allclose(_accel.ordered_pair_sum(d2, use_numba=True), _accel.ordered_pair_sum(d2, use_numba=False))
        tn = best_of(lambda: _accel.ordered_pair_sum(d2, use_numba=True), args.repeat)
        tp = best_of(lambda: _accel.ordered_pair_sum(d2, use_numba=False), args.repeat)
        print(f"{f'ordered_pair_sum n={n}':<42}{tn * 1e3:>10.2f}{tp * 1e3:>10.2f}{tp / tn:>8.1f}x")


if __name__ == "__main__":
    main()
