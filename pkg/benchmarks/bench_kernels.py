"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from replaylab import _pykernels, kernels
from replaylab.profile import expected_selection_profile
from replaylab.weighting import WeightScheme


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def tree_case(n=1 << 20, draws=1 << 18):
    rng = np.random.default_rng(0)
    tree = np.zeros(2 * n)
    tree[n:] = rng.random(n)
    width = n // 2
    while width >= 1:
        tree[width : 2 * width] = tree[2 * width : 4 * width : 2] + tree[2 * width + 1 : 4 * width : 2]
        width //= 2
    u = rng.random(draws) * tree[1]
    return lambda mod: mod.tree_sample(tree, n, u)


def band_case(steps=200_000, width=1024):
    rng = np.random.default_rng(1)
    n = np.arange(width * 4, width * 4 + steps, dtype=np.int64)
    cutoff = np.sort(rng.integers(1, width, steps)).astype(np.int64)
    x = rng.random(steps)
    out = np.zeros(n[-1] + 2)
    return lambda mod: mod.band_accumulate(out, n, cutoff, x, int(cutoff[-1]))


def staged_case(T=200_000, K=200):
    g = np.concatenate([[0.0], np.ones(T) / K])
    eta_pows = 0.996 ** (np.arange(1, K + 1) * 1000 / K)
    diff = np.zeros(T + 2)
    return lambda mod: mod.staged_accumulate(diff, g, eta_pows, 5000)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    compiled = kernels.compiled_backend
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<20}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, case in [("tree_sample", tree_case()), ("band_accumulate", band_case()), ("staged_accumulate", staged_case())]:
        py = best_of(lambda: case(_pykernels), args.repeat)
        if compiled is None:
            print(f"{name:<20}{py:>12.4f}{'n/a':>12}{'':>10}")
            continue
        cy = best_of(lambda: case(compiled), args.repeat)
        print(f"{name:<20}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")
    t0 = time.perf_counter()
    expected_selection_profile(WeightScheme("ere-approx"), 10**6)
    print(f"ere-approx profile, T=1e6 ({kernels.BACKEND}): {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
