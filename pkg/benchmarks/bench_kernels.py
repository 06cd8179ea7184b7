"""Time the compiled forest kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 800] [--p 20] [--trees 50] [--repeat 3]

Both backends run on identical inputs; the script also checks that their
outputs agree exactly before reporting timings.
"""
import argparse
import time

import numpy as np

from spatialcp import _fallback
from spatialcp.qrf import ForestParams, fit_qrf

try:
    from spatialcp import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--queries", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; run: pip install -e . --no-build-isolation")

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.n, args.p))
    y = X[:, 0] + 0.5 * rng.normal(size=args.n)
    Xq = rng.normal(size=(args.queries, args.p))
    ps = np.linspace(0.0, 1.0, 21)
    params = ForestParams(n_trees=args.trees, min_leaf=5)

    rows = []
    forests = {}
    for name, mod in (("cython", _kernels), ("python", _fallback)):
        t_fit, forest = _best(lambda: fit_qrf(X, y, params, kernels=mod), args.repeat)
        t_apply, leaves = _best(lambda: forest.apply(Xq), args.repeat)
        t_w, W = _best(lambda: forest.weights(Xq), args.repeat)
        t_q, Q = _best(lambda: forest.quantiles(Xq, ps), args.repeat)
        forests[name] = (leaves, W, Q)
        rows.append((name, t_fit, t_apply, t_w, t_q))

    same = all(np.array_equal(a, b) for a, b in zip(forests["cython"], forests["python"]))
    print(f"n={args.n} p={args.p} trees={args.trees} queries={args.queries} outputs identical: {same}")
    print(f"{'backend':<8} {'fit_s':>9} {'apply_s':>9} {'weights_s':>10} {'quant_s':>9}")
    for name, *ts in rows:
        print(f"{name:<8} " + " ".join(f"{t:>9.4f}" for t in ts))
    c, p = rows[0][1:], rows[1][1:]
    print("speedup  " + " ".join(f"{b / a:>9.1f}x" for a, b in zip(c, p)))
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
