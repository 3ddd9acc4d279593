"""Compare the compiled and numpy kernel backends on the hot paths.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--repeats R]

Prints the best wall time per workload and backend, the speedup, and
whether both backends produced identical results.
"""
import argparse
import time

import numpy as np

from congestion import _kernels
from congestion.models import gbt_fit, knn_fit


def best_of(fn, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def workloads(rows, rng):
    X = rng.random((rows, 6))
    y = X @ rng.normal(size=6) + np.sin(6 * X[:, 0]) + rng.normal(0, 0.1, rows)
    Q = rng.random((500, 6))
    knn = knn_fit(X, y)
    ens = gbt_fit(X[:5000], y[:5000], n_estimators=20)
    big = rng.random((50_000, 6))
    return {
        "gbt_fit (n=%d, 10 rounds)" % rows: lambda: gbt_fit(X, y, n_estimators=10).train_mse,
        "gbt_predict (50k rows)": lambda: ens.predict(big),
        "knn_brute (500 queries)": lambda: knn.neighbors(Q, 7, brute=True),
        "kdtree_query (500 queries)": lambda: knn.neighbors(Q, 7),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    before = _kernels.backend_name()
    jobs = workloads(args.rows, np.random.default_rng(0))
    print(f"{'workload':<30} {'python s':>10} {'compiled s':>11} {'speedup':>8}  identical")
    try:
        for name, fn in jobs.items():
            res = {}
            for b in backends:
                _kernels.set_backend(b)
                res[b] = best_of(fn, args.repeats)
            py = res["python"][0]
            if "compiled" in res:
                c = res["compiled"][0]
                ok = same(res["python"][1], res["compiled"][1])
                print(f"{name:<30} {py:>10.4f} {c:>11.4f} {py / c:>7.1f}x  {ok}")
            else:
                print(f"{name:<30} {py:>10.4f} {'-':>11} {'-':>8}  -")
    finally:
        _kernels.set_backend(before)


if __name__ == "__main__":
    main()
