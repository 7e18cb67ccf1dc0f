"""Rounding fractional b-matchings and s-t flows, and the augmenting-path finisher.

``round_bmatching`` turns a feasible fractional b-matching into an integral
one of size exactly ``floor(||x||_1)``: integral parts are set aside, every
vertex is split into unit copies, deficits are absorbed by dummy vertices so
that the result is a fractional perfect matching, and that is rounded by
cycle canceling on its support. ``round_flow`` rides on the flow/matching
reduction. ``augment_to_perfect`` grows an integral b-matching one unit at a
time until it is perfect or provably maximum.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DemandError, DimensionError, InfeasibleFlowError, InvariantFault
from .graph import DirectedMultigraph, check_feasible, decompose_flow, net_inflow
from .reduction import (
    BMatchingInstance,
    Infeasible,
    flow_to_matching,
    matching_to_flow,
    maxflow_to_bmatching,
)

__all__ = [
    "Perfect",
    "UnitSplit",
    "round_perfect",
    "split_unit",
    "round_bmatching",
    "round_flow",
    "augment_to_perfect",
]

TOL = 1e-9


@dataclass(frozen=True)
class Perfect:
    """A perfect integral b-matching."""

    x: np.ndarray


def _snap(v: np.ndarray, tol: float) -> np.ndarray:
    r = np.round(v)
    return np.where(np.abs(v - r) <= tol, r, v)


def round_perfect(n: int, edge_p, edge_q, x, tol: float = TOL) -> np.ndarray:
    """Integral perfect matching inside the support of a fractional perfect one.

    ``x`` lives on a bipartite multigraph with ``n`` vertices per side and
    fractional degree 1 everywhere. Returns a 0/1 vector over the edges.
    Repeatedly walks the fractional edges until a vertex repeats and shifts
    the closed cycle by its bottleneck; each shift makes one edge integral.
    The walk runs in the compiled kernel when available.
    """
    # the compiled kernel needs contiguous buffers
    ep = np.ascontiguousarray(edge_p, dtype=np.int64)
    eq = np.ascontiguousarray(edge_q, dtype=np.int64)
    x = np.array(x, dtype=float)
    m = x.size
    if ep.size != m or eq.size != m:
        raise DimensionError("edge lists and x differ in length")
    if m and (ep.min() < 0 or eq.min() < 0 or ep.max() >= n or eq.max() >= n):
        raise DimensionError("edge endpoint out of range")
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise DemandError("entries must lie in [0, 1]")
    deg_p = np.bincount(ep, weights=x, minlength=n)
    deg_q = np.bincount(eq, weights=x, minlength=n)
    slack_p = tol * np.maximum(np.bincount(ep, minlength=n), 1)
    slack_q = tol * np.maximum(np.bincount(eq, minlength=n), 1)
    if np.any(np.abs(deg_p - 1) > slack_p) or np.any(np.abs(deg_q - 1) > slack_q):
        raise DemandError("fractional degrees must all be 1")
    support = x > tol
    x = np.clip(_snap(x, tol), 0.0, 1.0)

    # vertices 0..n-1 are P, n..2n-1 are Q; CSR lists of the fractional edges
    live = np.flatnonzero((x > 0) & (x < 1))
    end_a, end_b = ep, eq + n
    verts = np.concatenate([end_a[live], end_b[live]])
    order = np.argsort(verts, kind="stable")
    adj_edge = np.concatenate([live, live])[order].astype(np.int64)
    adj_ptr = np.zeros(2 * n + 1, dtype=np.int64)
    np.cumsum(np.bincount(verts, minlength=2 * n), out=adj_ptr[1:])
    kernels.cancel_cycles(adj_ptr, adj_edge, end_a, end_b, x, float(tol))
    out = (x > 0.5).astype(np.int64)
    if n and (np.any(np.bincount(ep, weights=out, minlength=n) != 1)
              or np.any(np.bincount(eq, weights=out, minlength=n) != 1)):
        raise InvariantFault("round-perfect", "rounded matching is not perfect")
    if np.any(out.astype(bool) & ~support):
        raise InvariantFault("round-perfect", "rounded matching leaves the fractional support")
    return out


@dataclass(frozen=True)
class UnitSplit:
    """Unit-capacity instance built from a fractional b-matching residue.

    Edge ``i`` joins P-copy ``edge_p[i]`` and Q-copy ``edge_q[i]`` with value
    ``x[i]``; ``origin[i]`` is the original edge or -1 for dummy edges.
    Copies with index ``>= n_real_p`` (``n_real_q``) are dummies.
    """

    n: int
    edge_p: np.ndarray
    edge_q: np.ndarray
    x: np.ndarray
    origin: np.ndarray
    n_real_p: int
    n_real_q: int
    copy_owner_p: np.ndarray
    copy_owner_q: np.ndarray


def _split_side(owner: np.ndarray, amount: np.ndarray, tol: float):
    """Greedy fill of unit copies per owner vertex, in piece order.

    Returns ``(piece_index, copy, amount)`` triples, the per-copy fill and the
    owner of each copy.
    """
    order = np.argsort(owner, kind="stable")
    src: list[int] = []
    cp: list[int] = []
    amt: list[float] = []
    fill: list[float] = []
    copy_owner: list[int] = []
    cur_owner = -1
    for i in order:
        v = int(owner[i])
        a = float(amount[i])
        if v != cur_owner:
            cur_owner = v
            copy_owner.append(v)
            fill.append(0.0)
        while a > tol:
            room = 1.0 - fill[-1]
            if room <= tol:
                copy_owner.append(v)
                fill.append(0.0)
                room = 1.0
            take = min(a, room)
            if a - take <= tol:
                take = a
            src.append(int(i))
            cp.append(len(fill) - 1)
            amt.append(take)
            fill[-1] += take
            a -= take
    return (np.array(src, dtype=np.int64), np.array(cp, dtype=np.int64), np.array(amt)), \
        np.array(fill), np.array(copy_owner, dtype=np.int64)


def _dummy_fill(deficit: np.ndarray, tol: float):
    """Assign copy deficits to consecutive dummies of capacity 1, greedily."""
    copies: list[int] = []
    dummies: list[int] = []
    amt: list[float] = []
    d_fill = 0.0
    d_idx = 0
    for c in np.flatnonzero(deficit > tol):
        a = float(deficit[c])
        while a > tol:
            room = 1.0 - d_fill
            if room <= tol:
                d_idx += 1
                d_fill = 0.0
                room = 1.0
            take = min(a, room)
            if a - take <= tol:
                take = a
            copies.append(int(c))
            dummies.append(d_idx)
            amt.append(take)
            d_fill += take
            a -= take
    n_dummy = d_idx + 1 if copies else 0
    last_gap = (1.0 - d_fill) if copies else 0.0
    return np.array(copies, dtype=np.int64), np.array(dummies, dtype=np.int64), np.array(amt), n_dummy, last_gap


def split_unit(inst: BMatchingInstance, r: np.ndarray, tol: float = TOL) -> UnitSplit:
    """Unit split plus dummy completion of a residue ``r`` with entries in ``[0, 1)``."""
    live = np.flatnonzero(r > tol)
    # P side: pieces of each live edge over the unit copies of its P endpoint
    (ps, pc, pa), fill_p, own_p = _split_side(inst.edge_p[live], r[live], tol)
    # Q side: split those pieces again over the Q copies
    (qs, qc, qa), fill_q, own_q = _split_side(inst.edge_q[live[ps]], pa, tol)
    edge_p = pc[qs]
    edge_q = qc
    origin = live[ps[qs]]
    x = qa
    np_real, nq_real = fill_p.size, fill_q.size
    # P-copy deficits go to dummy Q vertices and vice versa
    cp_, dq_, ap_, nd_q, gap_q = _dummy_fill(1.0 - fill_p, tol)
    cq_, dp_, aq_, nd_p, gap_p = _dummy_fill(1.0 - fill_q, tol)
    if abs(gap_q - gap_p) > 1e-7:
        raise InvariantFault("dummy-deficits", f"last dummies differ: {gap_q!r} vs {gap_p!r}")
    n = np_real + nd_p
    if nq_real + nd_q != n:
        raise InvariantFault("dummy-deficits", f"sides unbalanced after padding: {n} vs {nq_real + nd_q}")
    ep = [edge_p, cp_, dp_ + np_real]
    eq = [edge_q, dq_ + nq_real, cq_]
    xs = [x, ap_, aq_]
    org = [origin, np.full(cp_.size + cq_.size, -1, dtype=np.int64)]
    if nd_p and nd_q and gap_q > tol:
        # the two partially filled dummies take each other
        ep.append(np.array([n - 1]))
        eq.append(np.array([n - 1]))
        xs.append(np.array([gap_q]))
        org.append(np.array([-1]))
    return UnitSplit(n, np.concatenate(ep), np.concatenate(eq), np.concatenate(xs), np.concatenate(org),
                     np_real, nq_real, own_p, own_q)


def round_bmatching(inst: BMatchingInstance, x, tol: float = TOL) -> np.ndarray:
    """Integral b-matching of size exactly ``floor(||x||_1)`` from a feasible fractional one."""
    x = np.asarray(x, dtype=float)
    if x.size != inst.m:
        raise DimensionError(f"{x.size} entries for {inst.m} edges")
    if np.any(x < -tol) or not inst.is_feasible(np.maximum(x, 0.0), tol):
        raise InfeasibleFlowError("x is not a feasible fractional b-matching")
    x = np.maximum(_snap(x, tol), 0.0)
    target = math.floor(float(x.sum()) + tol * max(1, inst.m))
    base = np.floor(x)
    r = x - base
    if np.all(r <= tol):
        out = base.astype(np.int64)
    else:
        us = split_unit(inst, r, tol)
        y = round_perfect(us.n, us.edge_p, us.edge_q, us.x, tol=1e-7)
        chosen = np.flatnonzero((y == 1) & (us.origin >= 0))
        out = base.astype(np.int64) + np.bincount(us.origin[chosen], minlength=inst.m).astype(np.int64)
    excess = int(out.sum()) - target
    if excess < 0:
        raise InvariantFault("rounding-size", f"rounded size {int(out.sum())} below floor {target}")
    # drop surplus units; the dummy count can leave one extra
    for e in np.flatnonzero(out > 0)[::-1]:
        if excess == 0:
            break
        k = min(int(out[e]), excess)
        out[e] -= k
        excess -= k
    if not inst.is_feasible(out):
        raise InvariantFault("rounding-feasible", "rounded b-matching exceeds a demand")
    return out


def round_flow(g: DirectedMultigraph, u, f, s: int, t: int, tol: float = TOL) -> np.ndarray:
    """Integral feasible s-t flow of value ``floor(F)`` from a feasible fractional one."""
    u = np.asarray(u if u is not None else g.require_capacities())
    f = np.asarray(f, dtype=float)
    if f.size != g.m or u.size != g.m:
        raise DimensionError("flow and capacities need one entry per arc")
    if not check_feasible(g.with_capacities(u), f, "directed", tol):
        raise InfeasibleFlowError("flow violates capacities or nonnegativity")
    sig = net_inflow(g, f)
    inner = np.ones(g.n, dtype=bool)
    inner[[s, t]] = False
    if np.any(np.abs(sig[inner]) > tol * max(1.0, float(np.abs(f).sum()))):
        raise InfeasibleFlowError("flow violates conservation")
    paths, _ = decompose_flow(g, f, tol)
    clean = np.zeros(g.m)
    for arcs, amt in paths:
        if g.tail[arcs[0]] != s or g.head[arcs[-1]] != t:
            raise InfeasibleFlowError("flow has a path that does not run from s to t")
        clean[arcs] += amt
    clean = np.minimum(clean, u)
    F = float(clean[g.tail == s].sum() - clean[g.head == s].sum())
    Fi = round(F)
    if abs(F - Fi) <= tol * max(1.0, F):
        F_up, pad = int(Fi), 0.0
    else:
        F_up, pad = math.ceil(F), math.ceil(F) - F
    g2 = DirectedMultigraph.from_arcs(g.n, list(zip(g.tail.tolist(), g.head.tolist())) + [(s, t)])
    u2 = np.concatenate([u, [1]]).astype(np.int64)
    f2 = np.concatenate([clean, [pad]])
    red = maxflow_to_bmatching(g2, u2, s, t, F_up)
    xm = flow_to_matching(red, f2, tol=1e-7)
    xi = round_bmatching(red.instance, xm, tol=1e-9)
    fi = matching_to_flow(red, xi)
    out = np.rint(fi[:-1]).astype(np.int64)
    value = int(fi[:-1][g.tail == s].sum() - fi[:-1][g.head == s].sum())
    want = math.floor(F + tol * max(1.0, F))
    if value > want:
        # the pad arc stayed empty; drop whole unit paths until the value is floor(F)
        ps, _ = decompose_flow(g, out.astype(float))
        for arcs, amt in ps:
            while value > want and out[arcs].min() >= 1 and amt >= 1:
                out[arcs] -= 1
                value -= 1
                amt -= 1
            if value == want:
                break
    if value != want or np.any(out < 0) or np.any(out > u):
        raise InvariantFault("round-flow", f"rounded flow has value {value}, expected {want}")
    return out


def augment_to_perfect(inst: BMatchingInstance, x) -> Perfect | Infeasible:
    """Grow an integral b-matching by augmenting paths until perfect or maximum.

    Each round is one multi-source BFS from under-matched P vertices through
    unused edges (P to Q) and matched edges (Q to P); reaching an
    under-matched Q vertex adds one unit. When no such path exists the
    matching is maximum, and ``Infeasible`` carries it.
    """
    x = np.asarray(x).copy()
    if np.any(x != np.round(x)) or np.any(x < 0):
        raise InfeasibleFlowError("augment_to_perfect needs an integral matching")
    x = x.astype(np.int64)
    if not inst.is_feasible(x):
        raise InfeasibleFlowError("matching exceeds a demand")
    n_p, n_q = inst.n_p, inst.n_q
    ep, eq = inst.edge_p, inst.edge_q
    adj_p: list[list[int]] = [[] for _ in range(n_p)]
    adj_q: list[list[int]] = [[] for _ in range(n_q)]
    for e in range(inst.m):
        adj_p[int(ep[e])].append(e)
        adj_q[int(eq[e])].append(e)
    dp = np.bincount(ep, weights=x, minlength=n_p).astype(np.int64)
    dq = np.bincount(eq, weights=x, minlength=n_q).astype(np.int64)
    bp, bq = inst.b_p.astype(np.int64), inst.b_q.astype(np.int64)
    cap = np.minimum(bp[ep], bq[eq])
    need = int(bp.sum() - dp.sum())
    augmentations = 0
    while True:
        src = np.flatnonzero(dp < bp)
        if src.size == 0 or not np.any(dq < bq):
            break
        # parent pointers: for Q vertex the P-side edge used, for P vertex the matched edge used
        par_q = np.full(n_q, -1, dtype=np.int64)
        par_p = np.full(n_p, -2, dtype=np.int64)
        par_p[src] = -1
        dq_ = deque(int(p) for p in src)
        hit = -1
        while dq_ and hit < 0:
            p = dq_.popleft()
            for e in adj_p[p]:
                q = int(eq[e])
                if par_q[q] >= 0 or x[e] >= cap[e]:
                    continue
                par_q[q] = e
                if dq[q] < bq[q]:
                    hit = q
                    break
                for e2 in adj_q[q]:
                    p2 = int(ep[e2])
                    if x[e2] > 0 and par_p[p2] == -2:
                        par_p[p2] = e2
                        dq_.append(p2)
        if hit < 0:
            break
        q = hit
        while True:
            e = int(par_q[q])
            x[e] += 1
            p = int(ep[e])
            if par_p[p] == -1:
                break
            e2 = int(par_p[p])
            x[e2] -= 1
            q = int(eq[e2])
        dp[p] += 1
        dq[hit] += 1
        augmentations += 1
        if augmentations > need:
            raise InvariantFault("augment-count", "more augmentations than the missing size")
    if inst.is_perfect(x):
        return Perfect(x)
    return Infeasible("no augmenting path: matching is maximum", x)
