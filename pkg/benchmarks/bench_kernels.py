#!/usr/bin/env python3
"""Benchmark the cascade exit kernels: numba @njit vs the pure-numpy fallback.

The kernel is the hot loop of threshold search: one call scores one
threshold vector over every example. Run:

    python3 benchmarks/bench_kernels.py --examples 50000 --stages 4 --vectors 2000

Setting CASCADEKIT_NO_NUMBA=1 would select the numpy path package-wide; this
script imports both implementations directly and times them side by side.
"""

import argparse
import time

import numpy as np

from cascadekit import _kernels


def bench(fn, conf, correct, cumcost, vectors, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        acc = 0
        for t in vectors:
            n_correct, counts = fn(conf, correct, cumcost, t)
            acc += n_correct
        best = min(best, time.perf_counter() - start)
    return best, acc


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--examples", type=int, default=50_000)
    parser.add_argument("--stages", type=int, default=4)
    parser.add_argument("--vectors", type=int, default=2_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    n, s = args.examples, args.stages
    conf = rng.random((s - 1, n))
    correct = rng.random((s, n)) < 0.8
    cumcost = np.cumsum(rng.random(s) + 0.5)
    vectors = [rng.random(s - 1) for _ in range(args.vectors)]

    print(f"{args.vectors} threshold vectors x {n} examples x {s} stages")

    t_np, a_np = bench(_kernels.cascade_outcome_numpy, conf, correct, cumcost, vectors)
    rate = args.vectors / t_np
    print(f"numpy fallback : {t_np:8.3f} s  ({rate:8.1f} vectors/s)")

    if not _kernels.NUMBA_ENABLED:
        print("numba          : unavailable (CASCADEKIT_NO_NUMBA set or numba missing)")
        return

    # warm-up excludes JIT compilation from the timing
    _kernels.cascade_outcome_numba(conf, correct, cumcost, vectors[0])
    t_nb, a_nb = bench(_kernels.cascade_outcome_numba, conf, correct, cumcost, vectors)
    assert a_np == a_nb, "paths disagree"
    rate = args.vectors / t_nb
    print(f"numba @njit    : {t_nb:8.3f} s  ({rate:8.1f} vectors/s)")
    print(f"speedup        : {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
