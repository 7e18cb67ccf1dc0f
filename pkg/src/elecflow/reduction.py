"""Reductions between max flow, bipartite b-matching and min-cost flow.

Three layers:

* ``maxflow_to_bmatching`` turns a unit-capacity s-t flow question "is there a
  flow of value F" into "does this bipartite instance have a perfect
  b-matching", with ``flow_to_matching``/``matching_to_flow`` translating
  witnesses in both directions.
* ``normalize_instance`` pads with isolated K_{6,6} blocks so demands and edge
  counts stay proportional to the vertex count.
* ``bmatching_to_mincost`` encodes perfect b-matching as an uncapacitated
  min-cost flow on a graph with a hub vertex ``v*`` (always vertex 0).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .errors import (
    TOL,
    DemandError,
    DimensionError,
    InfeasibleFlowError,
    InvariantFault,
    NotMaximumError,
    ParseError,
)
from .graph import DirectedMultigraph, check_feasible, cut_capacity, min_cut_from_max_flow, net_inflow

log = logging.getLogger(__name__)

__all__ = [
    "BMatchingInstance",
    "MinCostInstance",
    "FlowReduction",
    "FractionalMatching",
    "Infeasible",
    "maxflow_to_bmatching",
    "flow_to_matching",
    "matching_to_flow",
    "binary_search_maxflow",
    "normalize_instance",
    "bmatching_to_mincost",
    "extract_near_perfect",
    "read_bmatching",
    "write_bmatching",
]


@dataclass(frozen=True, eq=False)
class BMatchingInstance:
    """Bipartite graph with sides P and Q and integral vertex demands.

    Edge ``k`` joins ``P[edge_p[k]]`` and ``Q[edge_q[k]]``. ``n_core_p``,
    ``n_core_q`` and ``m_core`` count the vertices/edges that belong to the
    instance proper; anything beyond them is padding.
    """

    b_p: np.ndarray
    b_q: np.ndarray
    edge_p: np.ndarray
    edge_q: np.ndarray
    n_core_p: int = -1
    n_core_q: int = -1
    m_core: int = -1

    def __post_init__(self) -> None:
        b_p = np.asarray(self.b_p, dtype=np.int64).reshape(-1)
        b_q = np.asarray(self.b_q, dtype=np.int64).reshape(-1)
        ep = np.asarray(self.edge_p, dtype=np.int64).reshape(-1)
        eq = np.asarray(self.edge_q, dtype=np.int64).reshape(-1)
        if ep.size != eq.size:
            raise DimensionError("edge endpoint arrays differ in length")
        if np.any(b_p < 0) or np.any(b_q < 0):
            raise ValueError("demands must be nonnegative")
        if ep.size and (ep.min() < 0 or ep.max() >= b_p.size or eq.min() < 0 or eq.max() >= b_q.size):
            raise ValueError("edge endpoint out of range")
        for name, val in (("b_p", b_p), ("b_q", b_q), ("edge_p", ep), ("edge_q", eq)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.n_core_p < 0:
            object.__setattr__(self, "n_core_p", b_p.size)
        if self.n_core_q < 0:
            object.__setattr__(self, "n_core_q", b_q.size)
        if self.m_core < 0:
            object.__setattr__(self, "m_core", ep.size)

    @property
    def n_p(self) -> int:
        return self.b_p.size

    @property
    def n_q(self) -> int:
        return self.b_q.size

    @property
    def m(self) -> int:
        return self.edge_p.size

    @property
    def thickness(self) -> np.ndarray:
        return np.minimum(self.b_p[self.edge_p], self.b_q[self.edge_q])

    @property
    def norm_b(self) -> int:
        return int(self.b_p.sum() + self.b_q.sum())

    @property
    def balanced(self) -> bool:
        return int(self.thickness.sum()) <= 4 * self.norm_b

    def degrees(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.size != self.m:
            raise DimensionError(f"{x.size} edge values for {self.m} edges")
        return (np.bincount(self.edge_p, weights=x, minlength=self.n_p),
                np.bincount(self.edge_q, weights=x, minlength=self.n_q))

    def is_feasible(self, x, tol: float = TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.size != self.m or np.any(x < -tol):
            return False
        dp, dq = self.degrees(x)
        return bool(np.all(dp <= self.b_p + tol) and np.all(dq <= self.b_q + tol))

    def is_perfect(self, x, tol: float = TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.size != self.m or np.any(x < -tol):
            return False
        dp, dq = self.degrees(x)
        return bool(np.allclose(dp, self.b_p, atol=tol, rtol=0) and np.allclose(dq, self.b_q, atol=tol, rtol=0))

    def core(self, x) -> np.ndarray:
        """Restriction of an edge vector to the unpadded instance."""
        return np.asarray(x)[: self.m_core]


@dataclass(frozen=True, eq=False)
class FractionalMatching:
    """Nonnegative edge weights within the vertex demands."""

    instance: BMatchingInstance
    x: np.ndarray

    @property
    def size(self) -> float:
        return float(np.sum(self.x))


@dataclass(frozen=True)
class Infeasible:
    """No perfect b-matching exists. ``x`` is the best matching found, if any."""

    reason: str
    x: np.ndarray | None = None
    cost: float | None = None
    threshold: float | None = None


ARC_DIRECT, ARC_S_TO_HUB, ARC_HUB_TO_S, ARC_HUB_TO_T, ARC_T_TO_HUB = range(5)


@dataclass(frozen=True, eq=False)
class MinCostInstance:
    """Uncapacitated min-cost flow encoding of a perfect b-matching instance.

    Vertex 0 is the hub ``v*``; ``s_p`` is vertex ``1 + p`` and ``t_q`` is
    vertex ``1 + n_p + q``. ``sigma`` is the required net in-flow (``-b_p`` at
    ``s_p``, ``+b_q`` at ``t_q``); ``supply`` is its negation.
    """

    instance: BMatchingInstance
    graph: DirectedMultigraph
    lengths: np.ndarray
    sigma: np.ndarray
    kind: np.ndarray
    edge_of: np.ndarray
    copy_of: np.ndarray
    hub_out: np.ndarray  # hub_out[v]: arc (v*, v); -1 at v*
    hub_in: np.ndarray  # hub_in[v]: arc (v, v*)

    vstar: int = 0

    @property
    def m_hat(self) -> int:
        return self.graph.m

    @property
    def n_hat(self) -> int:
        return self.graph.n

    @property
    def supply(self) -> np.ndarray:
        return -self.sigma

    def s_vertex(self, p: int) -> int:
        return 1 + p

    def t_vertex(self, q: int) -> int:
        return 1 + self.instance.n_p + q

    def cost(self, f, lengths=None) -> float:
        ell = self.lengths if lengths is None else np.asarray(lengths, dtype=float)
        return float(np.dot(ell, np.asarray(f, dtype=float)))

    def direct_flow(self, f) -> np.ndarray:
        """Flow on direct arcs aggregated per original edge."""
        d = self.kind == ARC_DIRECT
        return np.bincount(self.edge_of[d], weights=np.asarray(f, dtype=float)[d], minlength=self.instance.m)


@dataclass(frozen=True, eq=False)
class FlowReduction:
    """Bookkeeping that links a flow network to its b-matching instance.

    ``arcs`` lists the kept arc ids of the input graph (arcs into ``s`` or out
    of ``t`` are dropped); ``pe_qe[i]`` is the edge ``(p_e, q_e)`` for kept arc
    ``arcs[i]``, ``tail_edge[i]`` the edge at its tail side and
    ``head_edge[i]`` the edge at its head side; ``vertex_edge[v]`` is
    ``(p_v, q_v)`` or -1 for ``s``/``t``.
    """

    instance: BMatchingInstance
    g: DirectedMultigraph
    u: np.ndarray
    s: int
    t: int
    F: int
    arcs: np.ndarray
    removed: np.ndarray
    pe_qe: np.ndarray
    tail_edge: np.ndarray
    head_edge: np.ndarray
    vertex_edge: np.ndarray


def _capacities(g: DirectedMultigraph, u) -> np.ndarray:
    if u is None:
        return g.require_capacities().astype(np.int64)
    u = np.asarray(u)
    if u.size != g.m:
        raise DimensionError(f"{u.size} capacities for {g.m} arcs")
    if np.any(u < 0) or np.any(u != np.round(u)):
        raise ValueError("capacities must be nonnegative integers")
    return u.astype(np.int64)


def _terminal_bounds(g: DirectedMultigraph, u: np.ndarray, s: int, t: int, keep: np.ndarray) -> tuple[int, int]:
    out_s = int(u[keep & (g.tail == s)].sum())
    in_t = int(u[keep & (g.head == t)].sum())
    return out_s, in_t


def _kept_arcs(g: DirectedMultigraph, s: int, t: int) -> np.ndarray:
    keep = (g.head != s) & (g.tail != t)
    dropped = np.flatnonzero(~keep)
    if dropped.size:
        log.info("dropping %d arcs entering s or leaving t: %s", dropped.size, dropped.tolist()[:20])
    return keep


def maxflow_to_bmatching(g: DirectedMultigraph, u, s: int, t: int, F: int) -> FlowReduction:
    """Bipartite instance with a perfect b-matching iff an s-t flow of value F exists."""
    if s == t or not (0 <= s < g.n and 0 <= t < g.n):
        raise ValueError("s and t must be distinct vertices")
    u = _capacities(g, u)
    keep = _kept_arcs(g, s, t)
    out_s, in_t = _terminal_bounds(g, u, s, t, keep)
    if not (0 <= F <= min(out_s, in_t)) or F != int(F):
        raise ValueError(f"F={F} outside [0, {min(out_s, in_t)}]")
    F = int(F)
    arcs = np.flatnonzero(keep)
    m, n = arcs.size, g.n
    others = [v for v in range(n) if v not in (s, t)]
    vid = np.full(n, -1, dtype=np.int64)
    vid[others] = np.arange(len(others))
    k = len(others)
    # P: p_e (m), p_v (k), p_t ; Q: q_e (m), q_v (k), q_s
    p_t, q_s = m + k, m + k
    ua = u[arcs]
    ta, ha = g.tail[arcs], g.head[arcs]
    in_cap = np.bincount(ha, weights=ua, minlength=n).astype(np.int64)
    out_cap = np.bincount(ta, weights=ua, minlength=n).astype(np.int64)
    b_p = np.concatenate([ua, in_cap[others], [in_t - F]])
    b_q = np.concatenate([ua, out_cap[others], [out_s - F]])

    idx = np.arange(m)
    ep = [idx, m + np.arange(k)]
    eq = [idx, m + np.arange(k)]
    # tail side: (p_e, q_tail) or (p_e, q_s)
    ep.append(idx)
    eq.append(np.where(ta == s, q_s, m + vid[ta]))
    # head side: (p_head, q_e) or (p_t, q_e)
    ep.append(np.where(ha == t, p_t, m + vid[ha]))
    eq.append(idx)
    inst = BMatchingInstance(b_p, b_q, np.concatenate(ep), np.concatenate(eq))
    vertex_edge = np.full(n, -1, dtype=np.int64)
    vertex_edge[others] = m + np.arange(k)
    return FlowReduction(
        inst, g, u, s, t, F, arcs, np.flatnonzero(~keep),
        pe_qe=idx, tail_edge=m + k + idx, head_edge=2 * m + k + idx, vertex_edge=vertex_edge,
    )


def flow_to_matching(red: FlowReduction, f, tol: float = TOL) -> np.ndarray:
    """Perfect (possibly fractional) b-matching for the instance built at value F."""
    g, u = red.g, red.u
    f = np.asarray(f, dtype=float)
    if f.size != g.m:
        raise DimensionError(f"{f.size} flow values for {g.m} arcs")
    if not check_feasible(g.with_capacities(u), f, "directed", tol):
        raise InfeasibleFlowError("flow violates capacities or nonnegativity")
    if np.any(np.abs(f[red.removed]) > tol):
        raise InfeasibleFlowError("flow uses an arc entering s or leaving t")
    sigma = net_inflow(g, f)
    expect = np.zeros(g.n)
    expect[red.s], expect[red.t] = -red.F, red.F
    if np.any(np.abs(sigma - expect) > tol * max(1.0, red.F)):
        raise InfeasibleFlowError(f"flow is not an s-t flow of value {red.F}")
    fa = f[red.arcs]
    ua = u[red.arcs].astype(float)
    x = np.zeros(red.instance.m)
    x[red.pe_qe] = fa
    x[red.tail_edge] = ua - fa
    x[red.head_edge] = ua - fa
    inflow = np.bincount(g.head[red.arcs], weights=fa, minlength=g.n)
    ok = red.vertex_edge >= 0
    x[red.vertex_edge[ok]] = inflow[ok]
    return x


def matching_to_flow(red: FlowReduction, x, tol: float = TOL) -> np.ndarray:
    """s-t flow of value F read off the ``(p_e, q_e)`` edges of a perfect b-matching."""
    x = np.asarray(x, dtype=float)
    if x.size != red.instance.m:
        raise DimensionError(f"{x.size} edge values for {red.instance.m} edges")
    if not red.instance.is_perfect(x, tol):
        raise InfeasibleFlowError("matching is not perfect")
    f = np.zeros(red.g.m)
    f[red.arcs] = x[red.pe_qe]
    return f


def binary_search_maxflow(
    g: DirectedMultigraph,
    u,
    s: int,
    t: int,
    matcher: Callable[[BMatchingInstance], np.ndarray | None],
    early_exit: bool = True,
    use_deficiency: bool = True,
):
    """Largest F whose instance has a perfect b-matching, with flow and cut.

    ``matcher`` returns an integral perfect b-matching, ``None``, or an
    integral b-matching that is maximum but not perfect. After every
    successful probe the witness flow is tested for an augmenting path; when
    none exists the flow is already maximum and the search stops.

    A maximum matching that misses ``D`` units at value ``F`` suggests
    ``F - D`` as the next probe (with ``use_deficiency``); the suggestion only
    steers the order of probes, and every answer is still certified by the
    cut check below. Returns ``(F, flow, cut, calls)``.
    """
    u = _capacities(g, u)
    keep = _kept_arcs(g, s, t)
    out_s, in_t = _terminal_bounds(g, u, s, t, keep)
    gu = g.with_capacities(u)
    lo, hi = 0, min(out_s, in_t)
    best_f = np.zeros(g.m)
    calls = 0
    infeasible_at: list[int] = []
    feasible_at: list[int] = []
    hint: int | None = None

    def probe(F: int) -> np.ndarray | None:
        nonlocal calls, hint
        calls += 1
        red = maxflow_to_bmatching(g, u, s, t, F)
        x = matcher(red.instance)
        if x is not None and red.instance.is_perfect(x):
            feasible_at.append(F)
            return matching_to_flow(red, x)
        infeasible_at.append(F)
        if x is not None and use_deficiency:
            if not red.instance.is_feasible(x):
                raise InvariantFault("matcher-output", f"matcher returned an infeasible b-matching at F={F}")
            hint = F - (red.instance.norm_b // 2 - int(np.rint(np.sum(x))))
        return None

    def is_max(f: np.ndarray) -> bool:
        try:
            min_cut_from_max_flow(gu, u, f, s, t)
            return True
        except NotMaximumError:
            return False

    if hi > 0:
        f = probe(hi)
        if f is not None:
            lo, best_f = hi, f
        else:
            hi -= 1
            while lo < hi:
                if hint is not None and lo < hint <= hi:
                    mid = hint
                else:
                    mid = (lo + hi + 1) // 2
                hint = None
                f = probe(mid)
                if f is None:
                    hi = mid - 1
                else:
                    lo, best_f = mid, f
                    if early_exit and is_max(f):
                        break
    if feasible_at and infeasible_at and max(feasible_at) > min(infeasible_at):
        raise InvariantFault("monotonicity", f"perfect at F={max(feasible_at)} but not at F={min(infeasible_at)}")
    limit = math.ceil(math.log2(max(int(u.sum()), 1))) + 1
    if calls > limit:
        raise InvariantFault("binary-search-calls", f"{calls} matcher calls exceed {limit}")
    cut = min_cut_from_max_flow(gu, u, best_f, s, t)
    if cut_capacity(gu, u, cut) != lo:
        raise InvariantFault("maxflow-mincut", f"cut capacity {cut_capacity(gu, u, cut)} != flow value {lo}")
    return lo, best_f, cut, calls


def _k66() -> tuple[np.ndarray, np.ndarray]:
    a = np.arange(6)
    return np.repeat(a, 6), np.tile(a, 6)


def normalize_instance(inst: BMatchingInstance, edge_ratio: float = 4.0) -> BMatchingInstance:
    """Pad with isolated unit-demand K_{6,6} blocks.

    Afterwards ``||b||_1 <= 2 * edges`` and ``edges <= edge_ratio * vertices``.
    Each block adds 12 demand, 12 vertices and 36 edges, so both ratios move
    toward 1/3 and 3 respectively; ``edge_ratio`` must exceed 3. Blocks add
    36 thickness per 12 demand, so an unbalanced instance is padded until it
    is balanced.
    """
    if edge_ratio <= 3:
        raise ValueError("edge_ratio must exceed 3 for padding to converge")
    nb, m, nv = inst.norm_b, inst.m, inst.n_p + inst.n_q
    thick = int(inst.thickness.sum())
    k = 0
    if nb > 2 * m:
        k = max(k, math.ceil((nb - 2 * m) / 60))
    if m > edge_ratio * nv:
        k = max(k, math.ceil((m - edge_ratio * nv) / (12 * edge_ratio - 36)))
    if thick > 4 * nb:
        k = max(k, math.ceil((thick - 4 * nb) / 12))
    if k == 0:
        return inst
    kp, kq = _k66()
    ep = [inst.edge_p] + [inst.n_p + 6 * i + kp for i in range(k)]
    eq = [inst.edge_q] + [inst.n_q + 6 * i + kq for i in range(k)]
    out = BMatchingInstance(
        np.concatenate([inst.b_p, np.ones(6 * k, dtype=np.int64)]),
        np.concatenate([inst.b_q, np.ones(6 * k, dtype=np.int64)]),
        np.concatenate(ep),
        np.concatenate(eq),
        n_core_p=inst.n_core_p,
        n_core_q=inst.n_core_q,
        m_core=inst.m_core,
    )
    assert out.balanced
    return out


def bmatching_to_mincost(inst: BMatchingInstance) -> MinCostInstance:
    """Hub graph with ``d(e)`` parallel unit-length copies per edge."""
    if not inst.balanced:
        raise DemandError("instance is not balanced")
    if int(inst.b_p.sum()) != int(inst.b_q.sum()):
        raise DemandError(
            f"side demands differ ({int(inst.b_p.sum())} vs {int(inst.b_q.sum())}); no perfect b-matching"
        )
    n_p, n_q = inst.n_p, inst.n_q
    n = 1 + n_p + n_q
    d = inst.thickness
    edge_of = np.repeat(np.arange(inst.m), d)
    copy_of = np.concatenate([np.arange(k) for k in d]) if d.size else np.zeros(0, dtype=np.int64)
    tails = [1 + inst.edge_p[edge_of]]
    heads = [1 + n_p + inst.edge_q[edge_of]]
    kinds = [np.full(edge_of.size, ARC_DIRECT)]
    sp_ = 1 + np.arange(n_p)
    tq_ = 1 + n_p + np.arange(n_q)
    zp, zq = np.zeros(n_p, dtype=np.int64), np.zeros(n_q, dtype=np.int64)
    for tl, hd, kd in ((sp_, zp, ARC_S_TO_HUB), (zp, sp_, ARC_HUB_TO_S), (zq, tq_, ARC_HUB_TO_T), (tq_, zq, ARC_T_TO_HUB)):
        tails.append(tl)
        heads.append(hd)
        kinds.append(np.full(tl.size, kd))
    tail, head, kind = np.concatenate(tails), np.concatenate(heads), np.concatenate(kinds)
    g = DirectedMultigraph(n, tail, head)
    m_hat = g.m
    hub_out = np.full(n, -1, dtype=np.int64)
    hub_in = np.full(n, -1, dtype=np.int64)
    ids = np.arange(m_hat)
    out_mask = tail == 0
    hub_out[head[out_mask]] = ids[out_mask]
    in_mask = head == 0
    hub_in[tail[in_mask]] = ids[in_mask]
    sigma = np.zeros(n)
    sigma[sp_] = -inst.b_p
    sigma[tq_] = inst.b_q
    full_edge_of = np.concatenate([edge_of, np.full(m_hat - edge_of.size, -1)])
    full_copy_of = np.concatenate([copy_of, np.full(m_hat - edge_of.size, -1)])
    assert m_hat <= 2 * (n - 1) + int(d.sum())
    return MinCostInstance(inst, g, np.ones(m_hat), sigma, kind, full_edge_of, full_copy_of, hub_out, hub_in)


def extract_near_perfect(inst: BMatchingInstance, mc: MinCostInstance, f, length_increase: float = 0.0,
                         lengths=None, tol: float = 1e-7):
    """Fractional b-matching from a near-optimal min-cost flow, or ``Infeasible``.

    The flow is accepted when its cost (under the current, possibly stretched,
    lengths) is at most ``||b||_1/2 + 1/2 + length_increase``. Direct-arc flow
    is then aggregated per edge and scaled down at any vertex whose degree
    would exceed its demand. When rejected, the same trimmed matching is
    attached to the ``Infeasible`` result for downstream repair.
    """
    f = np.asarray(f, dtype=float)
    if f.size != mc.m_hat:
        raise DimensionError(f"{f.size} flow values for {mc.m_hat} arcs")
    if np.any(f < -tol):
        raise InfeasibleFlowError("flow has negative entries")
    scale = max(1.0, float(np.abs(mc.sigma).sum()))
    if np.any(np.abs(net_inflow(mc.graph, f) - mc.sigma) > tol * scale):
        raise InfeasibleFlowError("flow does not meet the hub-graph demands")
    f = np.maximum(f, 0.0)
    cost = mc.cost(f, lengths)
    threshold = inst.norm_b / 2 + 0.5 + float(length_increase)
    x = mc.direct_flow(f)
    dp, _ = inst.degrees(x)
    over = dp > inst.b_p
    if np.any(over):
        x = x * np.where(over, inst.b_p / np.maximum(dp, 1e-300), 1.0)[inst.edge_p]
    _, dq = inst.degrees(x)
    over = dq > inst.b_q
    if np.any(over):
        x = x * np.where(over, inst.b_q / np.maximum(dq, 1e-300), 1.0)[inst.edge_q]
    if cost > threshold:
        return Infeasible("cost above perfect-matching threshold", x, cost, threshold)
    return FractionalMatching(inst, x)


def write_bmatching(inst: BMatchingInstance) -> str:
    """Text form: ``p bmatch nP nQ m``, ``n P|Q id b`` lines, ``e p q`` lines; ids 1-based."""
    lines = [f"p bmatch {inst.n_p} {inst.n_q} {inst.m}"]
    lines += [f"n P {i + 1} {int(b)}" for i, b in enumerate(inst.b_p)]
    lines += [f"n Q {j + 1} {int(b)}" for j, b in enumerate(inst.b_q)]
    lines += [f"e {int(p) + 1} {int(q) + 1}" for p, q in zip(inst.edge_p, inst.edge_q)]
    return "\n".join(lines) + "\n"


def read_bmatching(src: TextIO | str) -> BMatchingInstance:
    """Parse the format written by ``write_bmatching``. Demands default to 1."""
    text = src if isinstance(src, str) else src.read()
    header = None
    b_p = b_q = None
    ep: list[int] = []
    eq: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split()
        if not tok or tok[0] == "c":
            continue
        try:
            if tok[0] == "p":
                if header is not None or len(tok) != 5 or tok[1] != "bmatch":
                    raise ParseError(f"line {lineno}: bad header {raw!r}")
                header = (int(tok[2]), int(tok[3]), int(tok[4]))
                b_p = np.ones(header[0], dtype=np.int64)
                b_q = np.ones(header[1], dtype=np.int64)
            elif header is None:
                raise ParseError(f"line {lineno}: data before header")
            elif tok[0] == "n" and len(tok) == 4 and tok[1] in ("P", "Q"):
                arr = b_p if tok[1] == "P" else b_q
                i, b = int(tok[2]) - 1, int(tok[3])
                if not (0 <= i < arr.size) or b < 0:
                    raise ParseError(f"line {lineno}: bad demand line {raw!r}")
                arr[i] = b
            elif tok[0] == "e" and len(tok) == 3:
                p, q = int(tok[1]) - 1, int(tok[2]) - 1
                if not (0 <= p < header[0] and 0 <= q < header[1]):
                    raise ParseError(f"line {lineno}: edge endpoint out of range")
                ep.append(p)
                eq.append(q)
            else:
                raise ParseError(f"line {lineno}: unrecognised line {raw!r}")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: {exc}") from None
    if header is None:
        raise ParseError("missing 'p bmatch' header")
    if len(ep) != header[2]:
        raise ParseError(f"header declares {header[2]} edges, found {len(ep)}")
    return BMatchingInstance(b_p, b_q, np.array(ep, dtype=np.int64), np.array(eq, dtype=np.int64))
