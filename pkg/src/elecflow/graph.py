"""Directed multigraphs, demand vectors, flow predicates, decomposition and cuts.

Sign convention: the demand of a flow at ``v`` is its net in-flow,
``sigma_v = sum_{e enters v} f_e - sum_{e leaves v} f_e``. An s-t flow of value
``F`` therefore has demand ``F * chi(s, t)`` with ``-1`` at ``s`` and ``+1`` at
``t``. The incidence matrix has ``+1`` at the head and ``-1`` at the tail of
every arc, so ``B @ f`` is the demand of ``f``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import (
    TOL,
    DemandError,
    DimensionError,
    InfeasibleFlowError,
    MissingCapacityError,
    NotMaximumError,
    ParseError,
)

__all__ = [
    "DirectedMultigraph",
    "DemandVector",
    "chi",
    "net_inflow",
    "check_sigma_flow",
    "check_feasible",
    "st_flow_value",
    "decompose_flow",
    "min_cut_from_max_flow",
    "cut_capacity",
    "read_dimacs",
    "write_dimacs",
    "edge_list_dump",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DirectedMultigraph:
    """Vertices ``0..n-1`` and arcs ``0..m-1`` as (tail, head) pairs.

    Parallel arcs are distinct ids. Self-loops are rejected. Capacities are
    optional nonnegative integers.
    """

    n: int
    tail: np.ndarray
    head: np.ndarray
    capacities: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        tail = np.asarray(self.tail, dtype=np.int64).reshape(-1)
        head = np.asarray(self.head, dtype=np.int64).reshape(-1)
        if tail.shape != head.shape:
            raise DimensionError("tail and head arrays differ in length")
        if self.n < 0:
            raise ValueError("vertex count must be nonnegative")
        if tail.size and (tail.min() < 0 or head.min() < 0 or max(tail.max(), head.max()) >= self.n):
            raise ValueError("arc endpoint out of range")
        if np.any(tail == head):
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "tail", _frozen(tail))
        object.__setattr__(self, "head", _frozen(head))
        if self.capacities is not None:
            cap = np.asarray(self.capacities)
            if cap.shape != tail.shape:
                raise DimensionError("one capacity per arc required")
            if np.any(cap < 0) or not np.all(np.equal(np.mod(cap, 1), 0)):
                raise ValueError("capacities must be nonnegative integers")
            object.__setattr__(self, "capacities", _frozen(cap.astype(np.int64)))

    @classmethod
    def from_arcs(
        cls, n: int, arcs: Iterable[tuple[int, int]], capacities: Sequence[int] | None = None
    ) -> "DirectedMultigraph":
        arcs = list(arcs)
        tail = np.array([a for a, _ in arcs], dtype=np.int64)
        head = np.array([b for _, b in arcs], dtype=np.int64)
        cap = None if capacities is None else np.asarray(capacities, dtype=np.int64)
        return cls(n, tail, head, cap)

    @property
    def m(self) -> int:
        return int(self.tail.size)

    @property
    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.tail.tolist(), self.head.tolist()))

    def incidence(self) -> sp.csr_matrix:
        """``n x m`` matrix with +1 at the head and -1 at the tail of each arc."""
        if "B" not in self._cache:
            m = self.m
            rows = np.concatenate([self.head, self.tail])
            cols = np.concatenate([np.arange(m), np.arange(m)])
            vals = np.concatenate([np.ones(m), -np.ones(m)])
            self._cache["B"] = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, m))
        return self._cache["B"]

    def out_arcs(self) -> list[list[int]]:
        if "out" not in self._cache:
            out: list[list[int]] = [[] for _ in range(self.n)]
            for e, v in enumerate(self.tail.tolist()):
                out[v].append(e)
            self._cache["out"] = out
        return self._cache["out"]

    def in_arcs(self) -> list[list[int]]:
        if "in" not in self._cache:
            inc: list[list[int]] = [[] for _ in range(self.n)]
            for e, v in enumerate(self.head.tolist()):
                inc[v].append(e)
            self._cache["in"] = inc
        return self._cache["in"]

    def with_capacities(self, capacities: Sequence[int]) -> "DirectedMultigraph":
        return DirectedMultigraph(self.n, self.tail, self.head, np.asarray(capacities))

    def require_capacities(self) -> np.ndarray:
        if self.capacities is None:
            raise MissingCapacityError("graph has no capacities")
        return self.capacities


class DemandVector:
    """Per-vertex demands (net in-flow) summing to zero."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray, tol: float = TOL):
        v = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DemandError("demands must be finite")
        if abs(v.sum()) > tol * max(1.0, np.abs(v).sum()):
            raise DemandError(f"demands sum to {v.sum():.3e}, not zero")
        v.setflags(write=False)
        self.values = v

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"DemandVector({self.values.tolist()!r})"


def chi(n: int, s: int, t: int, value: float = 1.0) -> DemandVector:
    """Demand of an s-t flow of the given value: ``-value`` at s, ``+value`` at t."""
    v = np.zeros(n)
    v[s] -= value
    v[t] += value
    return DemandVector(v)


def _flow_array(g: DirectedMultigraph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != g.m:
        raise DimensionError(f"flow has {f.size} entries, graph has {g.m} arcs")
    if not np.all(np.isfinite(f)):
        raise InfeasibleFlowError("flow entries must be finite")
    return f


def net_inflow(g: DirectedMultigraph, f) -> np.ndarray:
    """Demand vector realised by ``f``."""
    f = _flow_array(g, f)
    return np.bincount(g.head, weights=f, minlength=g.n) - np.bincount(g.tail, weights=f, minlength=g.n)


def check_sigma_flow(g: DirectedMultigraph, f, sigma, tol: float = TOL) -> bool:
    """True iff ``f`` routes ``sigma`` (net in-flow equals sigma at every vertex)."""
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.size != g.n:
        raise DimensionError(f"demand has {sigma.size} entries, graph has {g.n} vertices")
    return bool(np.all(np.abs(net_inflow(g, f) - sigma) <= tol))


def check_feasible(g: DirectedMultigraph, f, mode: str = "directed", tol: float = TOL) -> bool:
    """Capacity feasibility: ``0 <= f <= u`` (directed) or ``|f| <= u`` (undirected)."""
    f = _flow_array(g, f)
    u = g.require_capacities()
    if mode == "directed":
        return bool(np.all(f >= -tol) and np.all(f <= u + tol))
    if mode == "undirected":
        return bool(np.all(np.abs(f) <= u + tol))
    raise ValueError(f"unknown mode {mode!r}")


def st_flow_value(f, s: int, t: int, g: DirectedMultigraph, tol: float = TOL) -> float:
    """Net out-flow of ``s``; fails if some other vertex is unbalanced."""
    d = net_inflow(g, f)
    mask = np.ones(g.n, dtype=bool)
    mask[[s, t]] = False
    if np.any(np.abs(d[mask]) > tol):
        bad = int(np.flatnonzero(mask & (np.abs(d) > tol))[0])
        raise InfeasibleFlowError(f"vertex {bad} has net balance {d[bad]:.3e}")
    return float(-d[s])


def decompose_flow(g: DirectedMultigraph, f, tol: float = TOL):
    """Split a nonnegative flow into paths and cycles.

    Cycles are cancelled first; the acyclic remainder is peeled into paths that
    start at vertices without remaining in-flow. Every extraction zeroes at
    least one arc, so there are at most ``m`` objects in total.

    Returns ``(paths, cycles)``; each entry is ``(arc_ids, amount)``.
    """
    x = _flow_array(g, f).copy()
    if np.any(x < -tol):
        raise InfeasibleFlowError("decomposition needs a nonnegative flow")
    x[x <= tol] = 0.0
    tail, head = g.tail, g.head
    out = g.out_arcs()
    cycles: list[tuple[list[int], float]] = []
    paths: list[tuple[list[int], float]] = []

    # Phase 1: cancel cycles in the positive support.
    while True:
        cyc = _find_cycle(g.n, out, head, x)
        if cyc is None:
            break
        amt = float(x[cyc].min())
        x[cyc] -= amt
        x[np.abs(x) <= tol] = 0.0
        cycles.append((cyc, amt))

    # Phase 2: acyclic remainder.
    inflow = np.bincount(head, weights=x, minlength=g.n)
    outflow = np.bincount(tail, weights=x, minlength=g.n)
    ptr = [0] * g.n
    while True:
        starts = np.flatnonzero((outflow > tol) & (inflow <= tol))
        if starts.size == 0:
            break
        v = int(starts[0])
        arcs: list[int] = []
        while True:
            lst = out[v]
            while ptr[v] < len(lst) and x[lst[ptr[v]]] <= 0.0:
                ptr[v] += 1
            if ptr[v] == len(lst):
                break
            e = lst[ptr[v]]
            arcs.append(e)
            v = int(head[e])
        amt = float(x[arcs].min())
        for e in arcs:
            x[e] -= amt
            if x[e] <= tol:
                x[e] = 0.0
            outflow[tail[e]] -= amt
            inflow[head[e]] -= amt
        paths.append((arcs, amt))
    if np.any(x > tol):
        raise InfeasibleFlowError("flow does not decompose (conservation violated)")
    return paths, cycles


def _find_cycle(n: int, out: list[list[int]], head: np.ndarray, x: np.ndarray) -> list[int] | None:
    color = [0] * n  # 0 new, 1 on stack, 2 done
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, 0)]
        via: list[int] = []
        color[root] = 1
        while stack:
            v, i = stack[-1]
            lst = out[v]
            while i < len(lst) and x[lst[i]] <= 0.0:
                i += 1
            if i == len(lst):
                color[v] = 2
                stack.pop()
                if via:
                    via.pop()
                continue
            stack[-1] = (v, i + 1)
            e = lst[i]
            w = int(head[e])
            if color[w] == 1:
                # back arc closes a cycle: walk the stack from w
                idx = next(k for k, (u, _) in enumerate(stack) if u == w)
                return via[idx:] + [e]
            if color[w] == 0:
                color[w] = 1
                stack.append((w, 0))
                via.append(e)
    return None


def _residual_reach(g: DirectedMultigraph, u: np.ndarray, f: np.ndarray, s: int, tol: float) -> np.ndarray:
    seen = np.zeros(g.n, dtype=bool)
    seen[s] = True
    q = deque([s])
    out, inc = g.out_arcs(), g.in_arcs()
    while q:
        v = q.popleft()
        for e in out[v]:
            w = int(g.head[e])
            if not seen[w] and f[e] < u[e] - tol:
                seen[w] = True
                q.append(w)
        for e in inc[v]:
            w = int(g.tail[e])
            if not seen[w] and f[e] > tol:
                seen[w] = True
                q.append(w)
    return seen


def min_cut_from_max_flow(g: DirectedMultigraph, u, f, s: int, t: int, tol: float = TOL) -> frozenset[int]:
    """Source side of a minimum cut: vertices reachable from s in the residual graph."""
    u = np.asarray(u if u is not None else g.require_capacities(), dtype=float)
    f = _flow_array(g, f)
    seen = _residual_reach(g, u, f, s, tol)
    if seen[t]:
        raise NotMaximumError("t is reachable in the residual graph; flow is not maximum")
    return frozenset(np.flatnonzero(seen).tolist())


def cut_capacity(g: DirectedMultigraph, u, side: Iterable[int]) -> int:
    """Total capacity of arcs leaving ``side``."""
    u = np.asarray(u if u is not None else g.require_capacities())
    mask = np.zeros(g.n, dtype=bool)
    mask[list(side)] = True
    crossing = mask[g.tail] & ~mask[g.head]
    return int(u[crossing].sum())


def read_dimacs(src: TextIO | str) -> tuple[DirectedMultigraph, int, int]:
    """Parse a DIMACS max-flow file. Vertex ids are 1-based in the file."""
    text = src if isinstance(src, str) else src.read()
    n = m = None
    s = t = None
    arcs: list[tuple[int, int]] = []
    caps: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] == "c":
            continue
        tok = line.split()
        try:
            if tok[0] == "p":
                if len(tok) != 4 or tok[1] != "max":
                    raise ParseError(f"line {lineno}: expected 'p max n m'")
                n, m = int(tok[2]), int(tok[3])
            elif tok[0] == "n":
                v, kind = int(tok[1]) - 1, tok[2]
                if kind == "s":
                    s = v
                elif kind == "t":
                    t = v
                else:
                    raise ParseError(f"line {lineno}: node designator must be s or t")
            elif tok[0] == "a":
                if len(tok) != 4:
                    raise ParseError(f"line {lineno}: expected 'a u v cap'")
                a, b, c = int(tok[1]) - 1, int(tok[2]) - 1, int(tok[3])
                if c < 0:
                    raise ParseError(f"line {lineno}: negative capacity")
                arcs.append((a, b))
                caps.append(c)
            else:
                raise ParseError(f"line {lineno}: unknown record {tok[0]!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: {exc}") from exc
    if n is None:
        raise ParseError("missing problem line")
    if s is None or t is None:
        raise ParseError("missing source or sink designator")
    if m is not None and m != len(arcs):
        raise ParseError(f"header declares {m} arcs, found {len(arcs)}")
    for a, b in arcs:
        if not (0 <= a < n and 0 <= b < n):
            raise ParseError(f"arc ({a + 1},{b + 1}) out of range")
    if not (0 <= s < n and 0 <= t < n) or s == t:
        raise ParseError("invalid source/sink")
    # self-loops never carry s-t flow; drop them rather than reject the file
    keep = [i for i, (a, b) in enumerate(arcs) if a != b]
    g = DirectedMultigraph.from_arcs(n, [arcs[i] for i in keep], [caps[i] for i in keep])
    return g, s, t


def write_dimacs(g: DirectedMultigraph, s: int, t: int) -> str:
    u = g.require_capacities()
    lines = [f"p max {g.n} {g.m}", f"n {s + 1} s", f"n {t + 1} t"]
    lines += [f"a {a + 1} {b + 1} {int(c)}" for (a, b), c in zip(g.arcs, u)]
    return "\n".join(lines) + "\n"


def edge_list_dump(g: DirectedMultigraph) -> str:
    """Debug dump: one ``id tail head [cap]`` line per arc."""
    rows = []
    for e, (a, b) in enumerate(g.arcs):
        cap = "" if g.capacities is None else f" {int(g.capacities[e])}"
        rows.append(f"{e} {a} {b}{cap}")
    return "\n".join(rows) + ("\n" if rows else "")
