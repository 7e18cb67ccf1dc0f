"""Instance generators shared by the unit, property and acceptance tests."""

from __future__ import annotations

import numpy as np

from elecflow.graph import DirectedMultigraph
from elecflow.oracles import dinic_maxflow
from elecflow.reduction import BMatchingInstance


def random_unit_graph(rng: np.random.Generator, n: int, m: int) -> tuple[DirectedMultigraph, int, int]:
    """Random directed multigraph without self-loops; s = 0, t = n - 1."""
    tail = rng.integers(0, n, m)
    head = (tail + rng.integers(1, n, m)) % n
    return DirectedMultigraph(n, tail, head, np.ones(m, dtype=np.int64)), 0, n - 1


def layered_dag(rng: np.random.Generator, layers: int, width: int, p: float = 0.5):
    """Source, ``layers`` layers of ``width`` vertices, sink; arcs only go one layer forward."""
    n = layers * width + 2
    s, t = 0, n - 1
    arcs = []
    layer = [list(range(1 + i * width, 1 + (i + 1) * width)) for i in range(layers)]
    arcs += [(s, v) for v in layer[0]]
    for a, b in zip(layer, layer[1:]):
        for v in a:
            for w in b:
                if rng.random() < p:
                    arcs.append((v, w))
    arcs += [(v, t) for v in layer[-1]]
    return DirectedMultigraph.from_arcs(n, arcs, [1] * len(arcs)), s, t


def expander(rng: np.random.Generator, n: int, d: int):
    """Union of ``d`` random permutations in both directions, self-loops dropped."""
    arcs = []
    for _ in range(d):
        perm = rng.permutation(n)
        for v in range(n):
            w = int(perm[v])
            if w != v:
                arcs.append((v, w))
                arcs.append((w, v))
    return DirectedMultigraph.from_arcs(n, arcs, [1] * len(arcs)), 0, n // 2


def parallel_paths(k: int, length: int, extra: int = 0):
    """``k`` internally disjoint s-t paths of ``length`` arcs plus ``extra`` parallel s-t arcs."""
    n = 2 + k * (length - 1)
    s, t = 0, n - 1
    arcs = []
    for i in range(k):
        inner = list(range(1 + i * (length - 1), 1 + (i + 1) * (length - 1)))
        seq = [s] + inner + [t]
        arcs += list(zip(seq, seq[1:]))
    arcs += [(s, t)] * extra
    return DirectedMultigraph.from_arcs(n, arcs, [1] * len(arcs)), s, t


def structured_instances(rng: np.random.Generator) -> list[tuple[str, DirectedMultigraph, int, int]]:
    out = []
    for i, (layers, width) in enumerate([(2, 3), (3, 4), (4, 3), (3, 6), (5, 4), (2, 8), (6, 3)]):
        out.append((f"layered-{i}", *layered_dag(rng, layers, width)))
    for i, (n, d) in enumerate([(8, 2), (12, 2), (16, 3), (20, 2), (24, 3), (30, 2), (40, 2)]):
        out.append((f"expander-{i}", *expander(rng, n, d)))
    for i, (k, length, extra) in enumerate([(1, 1, 3), (2, 3, 0), (3, 2, 1), (4, 4, 0), (5, 3, 2), (6, 2, 0)]):
        out.append((f"parallel-{i}", *parallel_paths(k, length, extra)))
    return out


def random_bipartite(rng: np.random.Generator, n_p: int, n_q: int, m: int, b_max: int = 1) -> BMatchingInstance:
    ep = rng.integers(0, n_p, m)
    eq = rng.integers(0, n_q, m)
    b_p = rng.integers(1, b_max + 1, n_p)
    b_q = rng.integers(1, b_max + 1, n_q)
    return BMatchingInstance(b_p, b_q, ep, eq)


def random_fractional_bmatching(rng: np.random.Generator, n_p: int, n_q: int, m: int, b_max: int = 8,
                                x_max: float = 4.0) -> tuple[BMatchingInstance, np.ndarray]:
    """Instance plus a feasible fractional b-matching with entries up to ``x_max``."""
    inst = random_bipartite(rng, n_p, n_q, m, b_max)
    x = rng.uniform(0, x_max, m) * (rng.random(m) < 0.8)
    # sprinkle exact integers and halves so snapping paths are exercised
    pick = rng.random(m)
    x[pick < 0.1] = np.floor(x[pick < 0.1])
    x[(pick >= 0.1) & (pick < 0.15)] = 0.5
    x = np.minimum(x, inst.thickness)
    for _ in range(2):
        dp, dq = inst.degrees(x)
        fp = np.where(dp > inst.b_p, inst.b_p / np.maximum(dp, 1e-300), 1.0)
        fq = np.where(dq > inst.b_q, inst.b_q / np.maximum(dq, 1e-300), 1.0)
        x = x * np.minimum(fp[inst.edge_p], fq[inst.edge_q])
    assert inst.is_feasible(x)
    return inst, x


def random_fractional_flow(rng: np.random.Generator, n: int, m: int, u_max: int = 3, k: int = 3):
    """Convex combination of ``k`` integral flows of a random capacitated graph, times a factor in (0, 1].

    Each integral flow is a maximum flow found by Dinic with the arcs in a
    shuffled order, so the combination is fractional on many arcs.
    """
    g, s, t = random_unit_graph(rng, n, m)
    u = rng.integers(1, u_max + 1, m)
    w = rng.dirichlet(np.ones(k)) * rng.uniform(0.2, 1.0)
    f = np.zeros(m)
    for wi in w:
        perm = rng.permutation(m)
        gp = DirectedMultigraph(n, g.tail[perm], g.head[perm])
        _, fp = dinic_maxflow(gp, u[perm], s, t)
        back = np.empty(m)
        back[perm] = fp
        f += wi * back
    return g.with_capacities(u), u, f, s, t
