import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elecflow.errors import (
    DemandError,
    DimensionError,
    InfeasibleFlowError,
    MissingCapacityError,
    NotMaximumError,
    ParseError,
)
from elecflow.graph import (
    DemandVector,
    DirectedMultigraph,
    check_feasible,
    check_sigma_flow,
    chi,
    cut_capacity,
    decompose_flow,
    edge_list_dump,
    min_cut_from_max_flow,
    net_inflow,
    read_dimacs,
    st_flow_value,
    write_dimacs,
)
from elecflow.oracles import dinic_maxflow

from corpus import random_unit_graph


def G(n, arcs, caps=None):
    return DirectedMultigraph.from_arcs(n, arcs, caps)


class TestConstruction:
    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            G(2, [(0, 0)])

    def test_endpoint_range(self):
        with pytest.raises(ValueError):
            G(2, [(0, 2)])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            DirectedMultigraph(3, [0, 1], [1])

    def test_capacity_shape_and_sign(self):
        with pytest.raises(DimensionError):
            G(2, [(0, 1)], [1, 2])
        with pytest.raises(ValueError):
            G(2, [(0, 1)], [-1])
        with pytest.raises(ValueError):
            DirectedMultigraph(2, [0], [1], np.array([0.5]))

    def test_parallel_arcs_are_distinct(self):
        g = G(2, [(0, 1), (0, 1)])
        assert g.m == 2
        assert g.out_arcs()[0] == [0, 1]
        assert g.in_arcs()[1] == [0, 1]

    def test_arrays_are_read_only(self):
        g = G(3, [(0, 1), (1, 2)])
        with pytest.raises(ValueError):
            g.tail[0] = 2

    def test_missing_capacities(self):
        with pytest.raises(MissingCapacityError):
            G(2, [(0, 1)]).require_capacities()

    def test_incidence_signs(self):
        B = G(3, [(0, 1), (1, 2)]).incidence().toarray()
        assert B.tolist() == [[-1, 0], [1, -1], [0, 1]]


class TestDemands:
    def test_demand_must_sum_to_zero(self):
        with pytest.raises(DemandError):
            DemandVector([1.0, 0.5])
        with pytest.raises(DemandError):
            DemandVector([np.inf, -np.inf])

    def test_chi_is_net_inflow(self):
        assert np.array(chi(3, 0, 2, 2.0)).tolist() == [-2.0, 0.0, 2.0]


class TestSigmaFlow:
    def test_single_arc_routes_unit(self):
        g = G(2, [(0, 1)])
        assert check_sigma_flow(g, [1.0], [-1, 1])

    def test_single_arc_not_a_circulation(self):
        assert not check_sigma_flow(G(2, [(0, 1)]), [1.0], [0, 0])

    @given(st.floats(-50, 50, allow_nan=False))
    def test_triangle_circulation(self, c):
        g = G(3, [(0, 1), (1, 2), (2, 0)])
        assert check_sigma_flow(g, [c, c, c], [0, 0, 0])

    def test_dimensions(self):
        g = G(2, [(0, 1)])
        with pytest.raises(DimensionError):
            check_sigma_flow(g, [1.0, 2.0], [0, 0])
        with pytest.raises(DimensionError):
            check_sigma_flow(g, [1.0], [0, 0, 0])


class TestFeasibility:
    g = G(3, [(0, 1), (1, 2)], [2, 1])

    def test_saturated_is_feasible(self):
        assert check_feasible(self.g, [2, 1])

    def test_negative_flow_directed(self):
        assert not check_feasible(self.g, [-0.1, 0])

    def test_reverse_flow_undirected(self):
        g = G(2, [(0, 1)], [1])
        assert check_feasible(g, [-0.5], mode="undirected")
        assert not check_feasible(g, [-1.5], mode="undirected")

    def test_over_capacity(self):
        assert not check_feasible(self.g, [2, 1.5])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            check_feasible(self.g, [0, 0], mode="both")


class TestFlowValue:
    def test_unit_path(self):
        g = G(3, [(0, 1), (1, 2)])
        assert st_flow_value([1, 1], 0, 2, g) == 1

    def test_zero(self):
        g = G(3, [(0, 1), (1, 2)])
        assert st_flow_value([0, 0], 0, 2, g) == 0

    def test_two_disjoint_paths(self):
        g = G(4, [(0, 1), (1, 3), (0, 2), (2, 3)])
        assert st_flow_value([1, 1, 1, 1], 0, 3, g) == 2

    def test_unbalanced_inner_vertex(self):
        g = G(3, [(0, 1), (1, 2)])
        with pytest.raises(InfeasibleFlowError):
            st_flow_value([1, 0], 0, 2, g)


class TestDecomposition:
    def test_single_path(self):
        g = G(3, [(0, 1), (1, 2)])
        paths, cycles = decompose_flow(g, [1, 1])
        assert paths == [([0, 1], 1.0)] and cycles == []

    def test_pure_circulation(self):
        g = G(3, [(0, 1), (1, 2), (2, 0)])
        paths, cycles = decompose_flow(g, [2, 2, 2])
        assert paths == [] and len(cycles) == 1
        assert sorted(cycles[0][0]) == [0, 1, 2] and cycles[0][1] == 2

    def test_path_plus_cycle_recovered(self):
        # path s->a->t and the cycle a->b->a, superposed
        g = G(4, [(0, 1), (1, 3), (1, 2), (2, 1)])
        paths, cycles = decompose_flow(g, [1, 1, 1, 1])
        assert paths == [([0, 1], 1.0)]
        assert [sorted(c) for c, _ in cycles] == [[2, 3]]

    def test_negative_rejected(self):
        with pytest.raises(InfeasibleFlowError):
            decompose_flow(G(2, [(0, 1)]), [-1])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        g, s, t = random_unit_graph(rng, n, int(rng.integers(n, 4 * n)))
        _, f = dinic_maxflow(g, rng.integers(1, 4, g.m), s, t)
        f = f.astype(float)
        paths, cycles = decompose_flow(g, f)
        total = np.zeros(g.m)
        for arcs, amt in paths + cycles:
            assert amt > 0
            total[arcs] += amt
        assert np.allclose(total, f)
        assert len(paths) + len(cycles) <= g.m
        for arcs, _ in paths:
            assert all(g.head[a] == g.tail[b] for a, b in zip(arcs, arcs[1:]))


class TestMinCut:
    def test_single_saturated_arc(self):
        g = G(2, [(0, 1)], [1])
        cut = min_cut_from_max_flow(g, None, [1], 0, 1)
        assert cut == {0} and cut_capacity(g, None, cut) == 1

    def test_two_parallel_arcs(self):
        g = G(2, [(0, 1), (0, 1)], [1, 1])
        cut = min_cut_from_max_flow(g, None, [1, 1], 0, 1)
        assert cut == {0} and cut_capacity(g, None, cut) == 2

    def test_not_maximum(self):
        g = G(2, [(0, 1), (0, 1)], [1, 1])
        with pytest.raises(NotMaximumError):
            min_cut_from_max_flow(g, None, [1, 0], 0, 1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_cut_is_minimum_by_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        g, s, t = random_unit_graph(rng, n, int(rng.integers(1, 3 * n)))
        u = g.capacities
        F, f = dinic_maxflow(g, u, s, t)
        cut = min_cut_from_max_flow(g, u, f, s, t)
        assert cut_capacity(g, u, cut) == F
        others = [v for v in range(n) if v not in (s, t)]
        best = min(
            cut_capacity(g, u, {s, *side})
            for k in range(len(others) + 1)
            for side in itertools.combinations(others, k)
        )
        assert best == F


class TestDimacs:
    text = "c example\np max 3 3\nn 1 s\nn 3 t\na 1 2 1\na 2 3 1\na 1 3 2\n"

    def test_round_trip(self):
        g, s, t = read_dimacs(self.text)
        assert (g.n, g.m, s, t) == (3, 3, 0, 2)
        g2, s2, t2 = read_dimacs(write_dimacs(g, s, t))
        assert g2.arcs == g.arcs and g2.capacities.tolist() == [1, 1, 2]

    @pytest.mark.parametrize(
        "bad",
        [
            "a 1 2 1\n",
            "p max 2 1\nn 1 s\na 1 2 1\n",
            "p max 2 1\nn 1 s\nn 2 t\na 1 3 1\n",
            "p max 2 2\nn 1 s\nn 2 t\na 1 2 1\n",
            "p max 2 1\nn 1 s\nn 2 t\na 1 2 -1\n",
            "p max 2 1\nn 1 s\nn 2 x\na 1 2 1\n",
            "p min 2 1\n",
            "p max 2 1\nn 1 s\nn 2 t\nz\n",
            "p max 2 1\nn 1 s\nn 2 t\na 1 two 1\n",
            "p max 2 0\nn 1 s\nn 1 t\n",
        ],
    )
    def test_malformed(self, bad):
        with pytest.raises(ParseError):
            read_dimacs(bad)

    def test_self_loops_dropped(self):
        g, _, _ = read_dimacs("p max 2 2\nn 1 s\nn 2 t\na 1 1 1\na 1 2 1\n")
        assert g.arcs == [(0, 1)]

    def test_dump(self):
        g, _, _ = read_dimacs(self.text)
        assert edge_list_dump(g).splitlines()[2] == "2 0 2 2"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_net_inflow_sums_to_zero(seed):
    rng = np.random.default_rng(seed)
    g, _, _ = random_unit_graph(rng, 6, 15)
    f = rng.normal(size=g.m)
    d = net_inflow(g, f)
    assert abs(d.sum()) < 1e-12
    assert np.allclose(d, g.incidence() @ f)
