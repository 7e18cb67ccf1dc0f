import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elecflow.errors import (
    DemandError,
    DimensionError,
    InfeasibleFlowError,
    InvariantFault,
    NotMaximumError,
    ParseError,
)
from elecflow.graph import DirectedMultigraph
from elecflow.ipm import CenteringParams, basic_path_following
from elecflow.oracles import brute_force_perfect_bmatching, dinic_maxflow, max_bmatching
from elecflow.reduction import (
    ARC_DIRECT,
    BMatchingInstance,
    FractionalMatching,
    Infeasible,
    binary_search_maxflow,
    bmatching_to_mincost,
    extract_near_perfect,
    flow_to_matching,
    matching_to_flow,
    maxflow_to_bmatching,
    normalize_instance,
    read_bmatching,
    write_bmatching,
)

from corpus import random_bipartite, random_unit_graph

seeds = st.integers(0, 2**32 - 1)


def G(n, arcs, caps=None):
    return DirectedMultigraph.from_arcs(n, arcs, caps if caps is not None else [1] * len(arcs))


def oracle_matcher(inst):
    return max_bmatching(inst)


class TestInstance:
    def test_validation(self):
        with pytest.raises(DimensionError):
            BMatchingInstance([1], [1], [0], [])
        with pytest.raises(ValueError):
            BMatchingInstance([-1], [1], [0], [0])
        with pytest.raises(ValueError):
            BMatchingInstance([1], [1], [0], [1])

    def test_feasible_and_perfect(self):
        inst = BMatchingInstance([2], [1, 1], [0, 0], [0, 1])
        assert inst.is_perfect([1, 1])
        assert inst.is_feasible([1, 0]) and not inst.is_perfect([1, 0])
        assert not inst.is_feasible([2, 0])
        assert not inst.is_feasible([-1, 1])
        assert inst.thickness.tolist() == [1, 1] and inst.norm_b == 4

    def test_text_round_trip(self):
        inst = BMatchingInstance([2, 1], [3], [0, 1], [0, 0])
        back = read_bmatching(write_bmatching(inst))
        assert back.b_p.tolist() == [2, 1] and back.b_q.tolist() == [3]
        assert back.edge_p.tolist() == [0, 1] and back.edge_q.tolist() == [0, 0]

    def test_demands_default_to_one(self):
        inst = read_bmatching("p bmatch 2 2 1\ne 1 2\n")
        assert inst.b_p.tolist() == [1, 1]

    @pytest.mark.parametrize("bad", [
        "e 1 1\n",
        "p bmatch 1 1 2\ne 1 1\n",
        "p bmatch 1 1 1\ne 1 2\n",
        "p bmatch 1 1 1\nn R 1 1\ne 1 1\n",
        "p bmatch 1 1 1\nn P 1 -2\ne 1 1\n",
        "p bmatch 1 1 1\np bmatch 1 1 1\n",
        "p bmatch x 1 1\n",
        "",
    ])
    def test_malformed(self, bad):
        with pytest.raises(ParseError):
            read_bmatching(bad)


class TestMaxflowToBmatching:
    def test_single_arc(self):
        red = maxflow_to_bmatching(G(2, [(0, 1)]), None, 0, 1, 1)
        inst = red.instance
        # P = (p_e, p_t), Q = (q_e, q_s)
        assert inst.b_p.tolist() == [1, 0] and inst.b_q.tolist() == [1, 0]

    def test_zero_value_source_demand(self):
        g = G(4, [(0, 1), (0, 2), (0, 2), (1, 3), (2, 3)], [1, 2, 1, 1, 1])
        red = maxflow_to_bmatching(g, None, 0, 3, 0)
        assert int(red.instance.b_q[-1]) == 4

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_vertex_and_edge_counts(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        g, s, t = random_unit_graph(rng, n, int(rng.integers(1, 30)))
        keep = (g.head != s) & (g.tail != t)
        m = int(keep.sum())
        red = maxflow_to_bmatching(g, None, s, t, 0)
        assert red.instance.n_p + red.instance.n_q == 2 * (m + n - 1)
        assert red.instance.m == 3 * m + n - 2

    def test_value_out_of_range(self):
        with pytest.raises(ValueError):
            maxflow_to_bmatching(G(2, [(0, 1)]), None, 0, 1, 2)
        with pytest.raises(ValueError):
            maxflow_to_bmatching(G(2, [(0, 1)]), None, 0, 0, 0)


class TestFlowToMatching:
    def test_unit_path(self):
        g = G(3, [(0, 1), (1, 2)])
        red = maxflow_to_bmatching(g, None, 0, 2, 1)
        assert red.instance.is_perfect(flow_to_matching(red, [1, 1]))

    def test_zero_flow(self):
        g = G(3, [(0, 1), (1, 2)])
        red = maxflow_to_bmatching(g, None, 0, 2, 0)
        x = flow_to_matching(red, [0, 0])
        assert red.instance.is_perfect(x)
        assert np.all(x[red.pe_qe] == 0)

    def test_half_units_on_parallel_paths(self):
        g = G(4, [(0, 1), (1, 3), (0, 2), (2, 3)])
        red = maxflow_to_bmatching(g, None, 0, 3, 1)
        x = flow_to_matching(red, [0.5] * 4)
        assert red.instance.is_perfect(x)
        assert np.any((x > 0) & (x < 1))

    def test_wrong_value_rejected(self):
        g = G(3, [(0, 1), (1, 2)])
        red = maxflow_to_bmatching(g, None, 0, 2, 1)
        with pytest.raises(InfeasibleFlowError):
            flow_to_matching(red, [0, 0])
        with pytest.raises(InfeasibleFlowError):
            flow_to_matching(red, [2, 2])

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        g, s, t = random_unit_graph(rng, int(rng.integers(3, 10)), int(rng.integers(3, 30)))
        u = rng.integers(1, 4, g.m)
        F, f = dinic_maxflow(g, u, s, t)
        # Dinic may route along arcs into s or out of t only in cycles; drop such instances
        red = maxflow_to_bmatching(g, u, s, t, F)
        if np.any(f[red.removed] != 0):
            return
        x = flow_to_matching(red, f)
        assert red.instance.is_perfect(x)
        assert np.array_equal(matching_to_flow(red, x), f)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_oracle_matching_gives_flow_of_value(self, seed):
        rng = np.random.default_rng(seed)
        g, s, t = random_unit_graph(rng, int(rng.integers(3, 10)), int(rng.integers(3, 30)))
        F, _ = dinic_maxflow(g, g.capacities, s, t)
        for value in range(F + 1):
            red = maxflow_to_bmatching(g, None, s, t, value)
            x = max_bmatching(red.instance)
            assert red.instance.is_perfect(x)
            f = matching_to_flow(red, x)
            out_s = f[g.tail == s].sum() - f[g.head == s].sum()
            assert out_s == value

    def test_imperfect_rejected(self):
        red = maxflow_to_bmatching(G(3, [(0, 1), (1, 2)]), None, 0, 2, 1)
        with pytest.raises(InfeasibleFlowError):
            matching_to_flow(red, np.zeros(red.instance.m))


class TestBinarySearch:
    def test_disconnected(self):
        g = G(4, [(0, 1), (2, 3)])
        F, f, cut, _ = binary_search_maxflow(g, None, 0, 3, oracle_matcher)
        assert F == 0 and not f.any() and 3 not in cut

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_parallel_arcs(self, k):
        F, _, cut, _ = binary_search_maxflow(G(2, [(0, 1)] * k), None, 0, 1, oracle_matcher)
        assert F == k and cut == {0}

    @pytest.mark.parametrize("hint", [True, False])
    def test_random_vs_dinic(self, hint):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 15))
            g, s, t = random_unit_graph(rng, n, int(rng.integers(1, 40)))
            F, f, cut, calls = binary_search_maxflow(g, None, s, t, oracle_matcher, use_deficiency=hint)
            assert F == dinic_maxflow(g, g.capacities, s, t)[0]

    def test_deficiency_hint_saves_calls(self):
        g = G(5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4), (0, 4)] + [(0, 1)] * 5)
        u = [1] * 6 + [1] + [1] * 5
        _, _, _, with_hint = binary_search_maxflow(g, u, 0, 4, oracle_matcher)
        _, _, _, without = binary_search_maxflow(g, u, 0, 4, oracle_matcher, use_deficiency=False)
        assert with_hint <= without

    def test_underreporting_matcher_caught_by_cut(self):
        g = G(2, [(0, 1)] * 4)

        def liar(inst):
            # denies every value above 1
            return max_bmatching(inst) if inst.b_q[-1] >= 3 else None

        with pytest.raises(NotMaximumError):
            binary_search_maxflow(g, None, 0, 1, liar, use_deficiency=False)

    def test_infeasible_matcher_output_faults(self):
        g = G(3, [(0, 1), (1, 2), (0, 2)])

        def bad(inst):
            return np.full(inst.m, 5)

        with pytest.raises(InvariantFault):
            binary_search_maxflow(g, None, 0, 2, bad)


class TestNormalize:
    def test_unchanged_when_ratios_hold(self):
        inst = BMatchingInstance([1, 1], [1, 1], [0, 0, 1, 1], [0, 1, 0, 1])
        assert normalize_instance(inst) is inst

    def test_sparse_instance_padded(self):
        inst = BMatchingInstance([1, 2], [1, 2], [0, 1], [0, 1])
        assert inst.norm_b == 3 * inst.m
        out = normalize_instance(inst)
        assert out.norm_b <= 2 * out.m
        assert out.m <= 4 * (out.n_p + out.n_q)
        assert out.m_core == inst.m and out.n_core_p == inst.n_p

    def test_unbalanced_instance_padded_to_balance(self):
        # 20 parallel edges of thickness 3 against a demand total of 6
        inst = BMatchingInstance([3], [3], [0] * 20, [0] * 20)
        assert not inst.balanced
        out = normalize_instance(inst)
        assert out.balanced and out.m_core == 20

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            normalize_instance(BMatchingInstance([1], [1], [0], [0]), edge_ratio=3)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_padding_preserves_perfectness(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_bipartite(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 5)), 3)
        if inst.norm_b > 16:
            return
        out = normalize_instance(inst)
        ok, _ = brute_force_perfect_bmatching(inst)
        x = max_bmatching(out)
        assert out.is_perfect(x) == ok


class TestMinCost:
    def test_parallel_copies_equal_thickness(self):
        inst = BMatchingInstance([3, 2], [3, 2], [0, 0, 1], [0, 1, 1])
        mc = bmatching_to_mincost(inst)
        direct = mc.kind == ARC_DIRECT
        assert np.bincount(mc.edge_of[direct], minlength=inst.m).tolist() == inst.thickness.tolist() == [3, 2, 2]

    def test_single_edge(self):
        mc = bmatching_to_mincost(BMatchingInstance([1], [1], [0], [0]))
        assert int((mc.kind == ARC_DIRECT).sum()) == 1 and mc.m_hat == 5
        assert mc.n_hat == 3

    def test_demands(self):
        inst = BMatchingInstance([2, 1], [3], [0, 1], [0, 0])
        mc = bmatching_to_mincost(inst)
        # net in-flow convention: P side sends, Q side receives
        assert mc.sigma.tolist() == [0, -2, -1, 3]
        assert mc.supply.tolist() == [0, 2, 1, -3]
        assert mc.hub_out[0] == -1 and mc.hub_in[0] == -1

    def test_unequal_sides(self):
        with pytest.raises(DemandError):
            bmatching_to_mincost(BMatchingInstance([2], [1], [0], [0]))


class TestExtract:
    def test_optimal_flow_is_near_perfect(self):
        inst = BMatchingInstance([1, 1], [1, 1], [0, 0, 1], [0, 1, 1])
        mc = bmatching_to_mincost(inst)
        sol = basic_path_following(mc, CenteringParams())
        res = extract_near_perfect(inst, mc, sol.f)
        assert isinstance(res, FractionalMatching)
        assert inst.is_feasible(res.x, tol=1e-9)
        assert res.size >= inst.norm_b / 2 - 0.5

    def test_cost_above_threshold(self):
        inst = BMatchingInstance([1], [1], [0], [0])
        mc = bmatching_to_mincost(inst)
        f = np.zeros(mc.m_hat)
        f[mc.hub_in[1]] = 1
        f[mc.hub_out[2]] = 1
        res = extract_near_perfect(inst, mc, f)
        assert isinstance(res, Infeasible) and res.cost == 2 and res.threshold == 1.5
        assert res.x.tolist() == [0]

    def test_everything_through_hub_but_stretch_budget(self):
        inst = BMatchingInstance([1], [1], [0], [0])
        mc = bmatching_to_mincost(inst)
        f = np.zeros(mc.m_hat)
        f[mc.hub_in[1]] = 1
        f[mc.hub_out[2]] = 1
        res = extract_near_perfect(inst, mc, f, length_increase=1.0)
        assert isinstance(res, FractionalMatching) and res.size == 0

    def test_demand_violation(self):
        inst = BMatchingInstance([1], [1], [0], [0])
        mc = bmatching_to_mincost(inst)
        with pytest.raises(InfeasibleFlowError):
            extract_near_perfect(inst, mc, np.zeros(mc.m_hat))
