"""Benchmark the compiled kernels against the pure-NumPy fallback.

Run from the repository root after an editable install:

    python benchmarks/bench_kernels.py [--sizes 1e4,1e5,1e6]

Prints one row per (kernel, size) with both backends' best-of-5 wall
times and the speedup. The compiled module is skipped (with a note) when
it was not built.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from driftsurv import _kernels_py

try:
    from driftsurv import _kernels_cy
except ImportError:
    _kernels_cy = None


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_inputs(n, rng):
    y = rng.normal(0.5, 0.2, n)
    w = rng.uniform(0.5, 2.0, n)
    n_seg = max(1, n // 50)
    bounds = np.sort(rng.choice(np.arange(1, n), size=n_seg - 1, replace=False))
    starts = np.concatenate(([0], bounds)).astype(np.int64)
    stops = np.concatenate((bounds, [n])).astype(np.int64)
    v = rng.normal(0, 1, n)
    v[rng.random(n) < 0.05] = np.nan
    x = rng.uniform(0, 1, n)
    return y, w, starts, stops, v, x


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="1e4,1e5,1e6",
                        help="comma-separated input lengths")
    args = parser.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)

    if _kernels_cy is None:
        print("compiled kernels not built; timing the NumPy fallback only")

    header = f"{'kernel':<16}{'n':>10}{'numpy (ms)':>14}{'cython (ms)':>14}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        y, w, starts, stops, v, x = make_inputs(n, rng)
        cases = {
            "pava": lambda impl: impl.pava(np.sort(y), w),
            "segment_cummin": lambda impl: impl.segment_cummin(v, starts, stops),
            "segment_linfit": lambda impl: impl.segment_linfit(x, v, starts,
                                                               stops, 1e-6),
        }
        for name, call in cases.items():
            t_py = best_of(lambda: call(_kernels_py))
            if _kernels_cy is not None:
                t_cy = best_of(lambda: call(_kernels_cy))
                print(f"{name:<16}{n:>10}{t_py * 1e3:>14.2f}{t_cy * 1e3:>14.2f}"
                      f"{t_py / t_cy:>9.1f}x")
            else:
                print(f"{name:<16}{n:>10}{t_py * 1e3:>14.2f}{'--':>14}{'--':>10}")


if __name__ == "__main__":
    main()
