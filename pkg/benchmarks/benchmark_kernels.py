#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times each kernel pair on a representative workload and prints a table of
best-of-N wall times with the numba/numpy speedup.  Use ``--json`` to also
write the numbers to a file for tracking.

Run from the repository root::

    python3 benchmarks/benchmark_kernels.py --repeats 3
"""

import argparse
import json
import time

import numpy as np

from capmeter import kernels


def best_time(func, setup, repeats):
    """Best wall time of `func(*setup())` over `repeats` fresh calls."""
    best = float("inf")
    for _ in range(repeats):
        args = setup()
        start = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - start)
    return best


def logistic_workload(n=2000, d=20, m=3, epochs=200):
    rng = np.random.default_rng(0)
    Xb = np.concatenate([rng.normal(size=(n, d)), np.ones((n, 1))], axis=1)
    y = rng.integers(0, m, size=n).astype(np.int64)

    def setup():
        return (Xb, y, m, 1e-4, 0.5, epochs, 0.0)

    label = f"logistic_gd        n={n} d={d} m={m} epochs={epochs}"
    return label, kernels.logistic_gd_numba, kernels.logistic_gd_numpy, setup


def mlp_workload(n=1000, d=20, h=16, m=2, epochs=20, batch=64):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, m, size=n).astype(np.int64)
    inits = (rng.normal(size=(d, h)) * 0.2, np.zeros(h),
             rng.normal(size=(h, m)) * 0.2, np.zeros(m))
    perms = np.stack([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)

    def setup():
        # the kernel updates parameters in place, so hand it fresh copies
        fresh = tuple(a.copy() for a in inits)
        return (X, y, *fresh, perms, 0.1, 0.9, batch)

    label = f"mlp_sgd            n={n} d={d} h={h} epochs={epochs}"
    return label, kernels.mlp_sgd_numba, kernels.mlp_sgd_numpy, setup


def sgld_workload(p=8, steps=200_000, kept=1000):
    rng = np.random.default_rng(2)
    lam = rng.uniform(0.5, 2.0, size=p)
    noise = rng.standard_normal((steps, p))

    def setup():
        return (np.zeros(p), lam, 1.0, 50.0, 0.0005, np.sqrt(0.001),
                noise, np.empty((kept, p)))

    label = f"sgld_chain         p={p} steps={steps}"
    return label, kernels.sgld_chain_diag_quad_numba, \
        kernels.sgld_chain_diag_quad_numpy, setup


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed calls per kernel; best time is reported")
    parser.add_argument("--json", default=None, metavar="PATH",
                        help="also write results as JSON")
    args = parser.parse_args(argv)

    workloads = [logistic_workload(), mlp_workload(), sgld_workload()]

    if kernels.NUMBA_AVAILABLE:
        print("compiling jitted kernels ...")
        kernels.warmup_jit()
    else:
        print("numba unavailable; timing the numpy fallbacks only")

    header = f"{'kernel / workload':<50} {'numba':>10} {'numpy':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    results = []
    for label, numba_fn, numpy_fn, setup in workloads:
        t_numpy = best_time(numpy_fn, setup, args.repeats)
        if kernels.NUMBA_AVAILABLE:
            numba_fn(*setup())  # compile this signature before timing
            t_numba = best_time(numba_fn, setup, args.repeats)
            speedup = t_numpy / t_numba
            print(f"{label:<50} {t_numba * 1e3:>8.2f}ms {t_numpy * 1e3:>8.2f}ms "
                  f"{speedup:>7.1f}x")
        else:
            t_numba = None
            speedup = None
            print(f"{label:<50} {'-':>10} {t_numpy * 1e3:>8.2f}ms {'-':>8}")
        results.append({"workload": " ".join(label.split()),
                        "numba_seconds": t_numba,
                        "numpy_seconds": t_numpy,
                        "speedup": speedup})

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"repeats": args.repeats, "results": results}, fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.json}")


if __name__ == "__main__":
    main()
