"""Timing comparison of the numba kernels against their numpy twins.

Each kernel is warmed up (JIT compilation and parity-table build) before
timing; the reported number is the best of --repeats runs. Correctness
of the pairing is asserted on the benchmark inputs before any timing.
"""

import argparse
import json
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from hyfermi.backend import NUMBA_AVAILABLE, USE_NUMBA
from hyfermi.kernels import (
    lattice_chi_sum_nb,
    lattice_chi_sum_np,
    opstring_apply_nb,
    opstring_apply_np,
    pair_sum_nb,
    pair_sum_np,
)


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def _pair_sum_case(n):
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    t = 0.75 * (x + 1.0)
    ws = 0.5 * w
    wt = 0.75 * w
    args = (s, ws, t, wt, 1.0, 2.0, 2)
    return args


def _opstring_case(n_modes):
    dim = 1 << n_modes
    modes = np.array([0, 3, n_modes - 2, n_modes - 1], dtype=np.int64)
    dags = np.array([1, 1, 0, 0], dtype=np.int64)
    targets_a = np.empty(dim, dtype=np.int64)
    signs_a = np.empty(dim, dtype=np.int8)
    targets_b = np.empty(dim, dtype=np.int64)
    signs_b = np.empty(dim, dtype=np.int8)
    return dim, modes, dags, (targets_a, signs_a), (targets_b, signs_b)


def run_benchmarks(repeats, pair_n, chi_nmax, op_modes):
    rows = []

    args = _pair_sum_case(pair_n)
    got_nb = pair_sum_nb(*args)
    got_np = pair_sum_np(*args)
    assert abs(got_nb - got_np) <= 1e-12 * abs(got_np)
    rows.append({
        "kernel": "pair_sum",
        "workload": f"{pair_n}x{pair_n} nodes, power 2",
        "numba_ms": _best_of(lambda: pair_sum_nb(*args), repeats),
        "numpy_ms": _best_of(lambda: pair_sum_np(*args), repeats),
    })

    chi_args = (chi_nmax, 0.02, 0.3, 0.75)
    got_nb = lattice_chi_sum_nb(*chi_args)
    got_np = lattice_chi_sum_np(*chi_args)
    assert abs(got_nb - got_np) <= 1e-10 * abs(got_np)
    rows.append({
        "kernel": "lattice_chi_sum",
        "workload": f"({2 * chi_nmax + 1})^3 lattice points",
        "numba_ms": _best_of(lambda: lattice_chi_sum_nb(*chi_args), repeats),
        "numpy_ms": _best_of(lambda: lattice_chi_sum_np(*chi_args), repeats),
    })

    dim, modes, dags, (ta, sa), (tb, sb) = _opstring_case(op_modes)
    opstring_apply_nb(modes, dags, 4, dim, ta, sa)
    opstring_apply_np(modes, dags, 4, dim, tb, sb)
    assert np.array_equal(ta, tb)
    assert np.array_equal(sa[ta >= 0], sb[tb >= 0])
    rows.append({
        "kernel": "opstring_apply",
        "workload": f"4-operator string on 2^{op_modes} states",
        "numba_ms": _best_of(
            lambda: opstring_apply_nb(modes, dags, 4, dim, ta, sa), repeats),
        "numpy_ms": _best_of(
            lambda: opstring_apply_np(modes, dags, 4, dim, tb, sb), repeats),
    })
    return rows


def main():
    parser = argparse.ArgumentParser(
        description="Benchmark numba kernels against numpy twins")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions per kernel (best is kept)")
    parser.add_argument("--pair-n", type=int, default=400,
                        help="Gauss nodes per axis for pair_sum")
    parser.add_argument("--chi-nmax", type=int, default=48,
                        help="lattice index bound for lattice_chi_sum")
    parser.add_argument("--op-modes", type=int, default=20,
                        help="mode count for opstring_apply (dim = 2^n)")
    parser.add_argument("--output", type=str, default=None,
                        help="optional JSON output path")
    args = parser.parse_args()

    print(f"numba available: {NUMBA_AVAILABLE}; active backend: "
          f"{'numba' if USE_NUMBA else 'numpy'}")
    if not NUMBA_AVAILABLE:
        print("numba missing: the *_nb names fall back to the numpy "
              "twins, so the comparison below is numpy vs numpy")

    rows = run_benchmarks(args.repeats, args.pair_n, args.chi_nmax,
                          args.op_modes)

    width = max(len(r["workload"]) for r in rows)
    print(f"{'kernel':<18} {'workload':<{width}} {'numba':>10} "
          f"{'numpy':>10} {'speedup':>8}")
    for r in rows:
        ratio = r["numpy_ms"] / r["numba_ms"] if r["numba_ms"] > 0 else 0.0
        print(f"{r['kernel']:<18} {r['workload']:<{width}} "
              f"{r['numba_ms']:>8.2f}ms {r['numpy_ms']:>8.2f}ms "
              f"{ratio:>7.1f}x")

    if args.output:
        doc = {"numba_available": NUMBA_AVAILABLE, "repeats": args.repeats,
               "results": rows}
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
        print(f"written: {args.output}")


if __name__ == "__main__":
    main()
