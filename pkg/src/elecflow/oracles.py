"""Reference solvers: Dinic max flow, Hopcroft-Karp matching, exhaustive b-matching.

These share no code with the interior-point pipeline beyond the graph type,
so agreement with them is independent evidence.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from .graph import DirectedMultigraph, min_cut_from_max_flow
from .reduction import BMatchingInstance

__all__ = [
    "dinic_maxflow",
    "hopcroft_karp",
    "konig_cover",
    "max_bmatching",
    "brute_force_perfect_bmatching",
    "BRUTE_FORCE_LIMIT",
]

BRUTE_FORCE_LIMIT = 16


class _Dinic:
    def __init__(self, n: int):
        self.n = n
        self.to: list[int] = []
        self.cap: list[int] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add(self, u: int, v: int, c: int) -> int:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        return len(self.to) - 2

    def _bfs(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            for a in self.adj[v]:
                if self.cap[a] > 0 and level[self.to[a]] < 0:
                    level[self.to[a]] = level[v] + 1
                    q.append(self.to[a])
        return level if level[t] >= 0 else None

    def _blocking(self, s: int, t: int, level: list[int]) -> int:
        it = [0] * self.n
        total = 0
        while True:
            # iterative DFS along the level graph
            path: list[int] = []
            v = s
            while v != t:
                adj = self.adj[v]
                while it[v] < len(adj):
                    a = adj[it[v]]
                    w = self.to[a]
                    if self.cap[a] > 0 and level[w] == level[v] + 1:
                        break
                    it[v] += 1
                if it[v] == len(adj):
                    if v == s:
                        return total
                    level[v] = -1  # dead end
                    a = path.pop()
                    v = self.to[a ^ 1]
                    it[v] += 1
                    continue
                a = adj[it[v]]
                path.append(a)
                v = self.to[a]
            push = min(self.cap[a] for a in path)
            for a in path:
                self.cap[a] -= push
                self.cap[a ^ 1] += push
            total += push

    def run(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = self._bfs(s, t)
            if level is None:
                return flow
            flow += self._blocking(s, t, level)


def dinic_maxflow(g: DirectedMultigraph, u, s: int, t: int) -> tuple[int, np.ndarray]:
    """Maximum s-t flow for integer capacities; the result is checked for a residual path."""
    u = np.asarray(u if u is not None else g.require_capacities())
    if np.any(u < 0) or np.any(u != np.round(u)):
        raise ValueError("capacities must be nonnegative integers")
    d = _Dinic(g.n)
    ids = [d.add(int(a), int(b), int(c)) for a, b, c in zip(g.tail, g.head, u)]
    F = d.run(s, t) if s != t else 0
    f = np.array([u[i] - d.cap[a] for i, a in enumerate(ids)], dtype=np.int64)
    min_cut_from_max_flow(g, u, f, s, t)  # raises if an augmenting path remains
    return int(F), f


def hopcroft_karp(n_left: int, n_right: int, edges) -> tuple[int, np.ndarray]:
    """Maximum matching; returns ``(size, mate)`` with ``mate[u]`` the right partner of left ``u`` or -1."""
    adj: list[list[int]] = [[] for _ in range(n_left)]
    for a, b in edges:
        adj[int(a)].append(int(b))
    INF = n_left + n_right + 1
    mate_l = [-1] * n_left
    mate_r = [-1] * n_right
    dist = [0] * n_left

    def bfs() -> bool:
        q = deque()
        for v in range(n_left):
            if mate_l[v] < 0:
                dist[v] = 0
                q.append(v)
            else:
                dist[v] = INF
        found = False
        while q:
            v = q.popleft()
            for w in adj[v]:
                x = mate_r[w]
                if x < 0:
                    found = True
                elif dist[x] == INF:
                    dist[x] = dist[v] + 1
                    q.append(x)
        return found

    def dfs(root: int) -> bool:
        # explicit stack of (vertex, next neighbour index)
        stack = [[root, 0]]
        trail: list[int] = []
        while stack:
            v, i = stack[-1]
            if i == len(adj[v]):
                dist[v] = INF
                stack.pop()
                if trail:
                    trail.pop()
                continue
            stack[-1][1] += 1
            w = adj[v][i]
            x = mate_r[w]
            if x < 0:
                trail.append(w)
                for (vv, _), ww in zip(stack, trail):
                    mate_l[vv] = ww
                    mate_r[ww] = vv
                return True
            if dist[x] == dist[v] + 1:
                trail.append(w)
                stack.append([x, 0])
        return False

    size = 0
    while bfs():
        for v in range(n_left):
            if mate_l[v] < 0 and dfs(v):
                size += 1
    return size, np.array(mate_l, dtype=np.int64)


def konig_cover(n_left: int, n_right: int, edges, mate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum vertex cover from a maximum matching (certifies maximality).

    Returns boolean masks over left and right vertices; the cover size equals
    the matching size exactly when the matching is maximum.
    """
    adj: list[list[int]] = [[] for _ in range(n_left)]
    for a, b in edges:
        adj[int(a)].append(int(b))
    mate_r = np.full(n_right, -1, dtype=np.int64)
    for v, w in enumerate(mate):
        if w >= 0:
            mate_r[w] = v
    seen_l = np.zeros(n_left, dtype=bool)
    seen_r = np.zeros(n_right, dtype=bool)
    q = deque(v for v in range(n_left) if mate[v] < 0)
    for v in q:
        seen_l[v] = True
    while q:
        v = q.popleft()
        for w in adj[v]:
            if not seen_r[w] and mate[v] != w:
                seen_r[w] = True
                x = mate_r[w]
                if x >= 0 and not seen_l[x]:
                    seen_l[x] = True
                    q.append(x)
    return ~seen_l, seen_r


def max_bmatching(inst: BMatchingInstance) -> np.ndarray:
    """Maximum integral b-matching via Dinic on the source/sink network."""
    n_p, n_q = inst.n_p, inst.n_q
    s, t = n_p + n_q, n_p + n_q + 1
    d = _Dinic(n_p + n_q + 2)
    for p, b in enumerate(inst.b_p):
        d.add(s, p, int(b))
    for q, b in enumerate(inst.b_q):
        d.add(n_p + q, t, int(b))
    ids = [d.add(int(p), n_p + int(q), int(min(inst.b_p[p], inst.b_q[q]))) for p, q in zip(inst.edge_p, inst.edge_q)]
    d.run(s, t)
    return np.array([d.cap[a ^ 1] for a in ids], dtype=np.int64)


def brute_force_perfect_bmatching(inst: BMatchingInstance) -> tuple[bool, np.ndarray | None]:
    """Decide perfect b-matching existence by exhaustive search over edge multiplicities.

    Limited to ``||b||_1 <= 16``. Edges are assigned in order with
    pruning on residual demands.
    """
    if inst.norm_b > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to ||b||_1 <= {BRUTE_FORCE_LIMIT}, got {inst.norm_b}")
    if int(inst.b_p.sum()) != int(inst.b_q.sum()):
        return False, None
    m = inst.m
    ep, eq = inst.edge_p.tolist(), inst.edge_q.tolist()
    rp, rq = inst.b_p.astype(int).tolist(), inst.b_q.astype(int).tolist()
    # last edge index touching each P vertex: after it the vertex must be full
    last_p = [-1] * inst.n_p
    for i, p in enumerate(ep):
        last_p[p] = i
    x = [0] * m

    def rec(i: int) -> bool:
        if i == m:
            return not any(rp) and not any(rq)
        p, q = ep[i], eq[i]
        top = min(rp[p], rq[q])
        lo = rp[p] if last_p[p] == i else 0
        for k in range(top, lo - 1, -1):
            rp[p] -= k
            rq[q] -= k
            x[i] = k
            if rec(i + 1):
                return True
            rp[p] += k
            rq[q] += k
        x[i] = 0
        return False

    if any(b > 0 and last_p[p] < 0 for p, b in enumerate(rp)):
        return False, None
    ok = rec(0)
    return (True, np.array(x, dtype=np.int64)) if ok else (False, None)


def _all_matchings_small(n_left: int, n_right: int, edges) -> int:
    """Largest matching by enumeration (test helper for tiny graphs)."""
    edges = list(edges)
    for k in range(min(n_left, n_right, len(edges)), 0, -1):
        for sub in itertools.combinations(edges, k):
            ls = {a for a, _ in sub}
            rs = {b for _, b in sub}
            if len(ls) == k and len(rs) == k:
                return k
    return 0
