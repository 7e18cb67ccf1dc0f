"""Compiled vs pure-Python kernels on random hub-graph Laplacians and fractional matchings.

Usage: python benchmarks/bench_kernels.py [--sizes 100 300 1000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from elecflow import _kernels_py as py
from elecflow.electrical import LaplacianPattern
from elecflow.graph import DirectedMultigraph

try:
    from elecflow import _kernels as cy
except ImportError:  # extension not built
    cy = None


def random_graph(rng: np.random.Generator, n: int, m: int) -> DirectedMultigraph:
    tail = rng.integers(0, n, m)
    head = (tail + rng.integers(1, n, m)) % n
    # a spanning path keeps the graph connected
    tail = np.concatenate([tail, np.arange(n - 1)])
    head = np.concatenate([head, np.arange(1, n)])
    return DirectedMultigraph(n, tail, head)


def cholesky_case(mod, pat: LaplacianPattern, cond: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    parent = mod.etree(pat.Cp, pat.Ci, pat.nr)
    Lp = mod.symbolic(pat.Cp, pat.Ci, parent, pat.nr)
    Li = np.empty(Lp[-1], dtype=np.int64)
    Lx = np.empty(Lp[-1])
    status = mod.numeric(pat.Cp, pat.Ci, pat.assemble(cond), parent, Lp, Li, Lx)
    assert status < 0
    b = rhs.copy()
    mod.solve(Lp, Li, Lx, b)
    return b


def permutation_mix(rng: np.random.Generator, n: int, k: int):
    """Doubly stochastic matrix as an average of k random permutations, as an edge list."""
    rows = np.tile(np.arange(n), k)
    cols = np.concatenate([rng.permutation(n) for _ in range(k)])
    return rows, cols, np.full(n * k, 1.0 / k)


def cycles_case(mod, n: int, ep, eq, x) -> np.ndarray:
    x = x.copy()
    verts = np.concatenate([ep, eq + n])
    live = np.concatenate([np.arange(ep.size)] * 2)
    order = np.argsort(verts, kind="stable")
    ptr = np.zeros(2 * n + 1, dtype=np.int64)
    np.cumsum(np.bincount(verts, minlength=2 * n), out=ptr[1:])
    mod.cancel_cycles(ptr, live[order].astype(np.int64), ep.astype(np.int64), (eq + n).astype(np.int64), x, 1e-9)
    return x


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if cy is None:
        print("compiled kernels not built; only the Python timings are shown")
    print(f"{'kernel':<16}{'size':>7}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for m in args.sizes:
        g = random_graph(rng, max(4, m // 4), m)
        pat = LaplacianPattern(g.n, g.tail, g.head)
        cond = rng.uniform(0.1, 10.0, g.m)
        rhs = rng.standard_normal(pat.nr)
        tp = best_of(lambda: cholesky_case(py, pat, cond, rhs), args.repeat)
        line = f"{'cholesky':<16}{g.m:>7}{tp:>12.4f}"
        if cy is not None:
            a = cholesky_case(py, pat, cond, rhs)
            b = cholesky_case(cy, pat, cond, rhs)
            assert np.allclose(a, b, rtol=1e-10, atol=1e-12)
            tc = best_of(lambda: cholesky_case(cy, pat, cond, rhs), args.repeat)
            line += f"{tc:>12.4f}{tp / tc:>10.1f}"
        print(line)
    for m in args.sizes:
        n = max(2, m // 4)
        ep, eq, x = permutation_mix(rng, n, 4)
        tp = best_of(lambda: cycles_case(py, n, ep, eq, x), args.repeat)
        line = f"{'cancel_cycles':<16}{ep.size:>7}{tp:>12.4f}"
        if cy is not None:
            assert np.array_equal(cycles_case(py, n, ep, eq, x), cycles_case(cy, n, ep, eq, x))
            tc = best_of(lambda: cycles_case(cy, n, ep, eq, x), args.repeat)
            line += f"{tc:>12.4f}{tp / tc:>10.1f}"
        print(line)


if __name__ == "__main__":
    main()
