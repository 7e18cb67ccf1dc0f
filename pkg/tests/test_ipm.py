import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elecflow.errors import DemandError, EmbeddingError, InvariantFault
from elecflow.graph import DirectedMultigraph, check_sigma_flow
from elecflow.ipm import (
    CenteringParams,
    PotentialSolver,
    PrimalDualSolution,
    associated_flow,
    associated_resistances,
    basic_path_following,
    basic_step_constant,
    centrality,
    congestion,
    dual_potentials_from_slacks,
    duality_gap,
    improvement_step,
    initial_solution,
    max_step_size,
    mu_hat,
)
from elecflow.pipeline import SolverConfig, _balanced_sides, solve_bmatching
from elecflow.reduction import BMatchingInstance, FractionalMatching, bmatching_to_mincost, extract_near_perfect
from elecflow.reduction import normalize_instance
from elecflow.report import RunReport

from corpus import random_bipartite

seeds = st.integers(0, 2**32 - 1)


def two_arc(f, s, nu):
    g = DirectedMultigraph.from_arcs(2, [(0, 1), (0, 1)])
    f = np.asarray(f, dtype=float)
    return PrimalDualSolution(g, [-f.sum(), f.sum()], f, s, nu, s, [0.0, 0.0])


def random_mincost(rng, b_max=3):
    n_p, n_q = int(rng.integers(1, 8)), int(rng.integers(1, 8))
    inst = random_bipartite(rng, n_p, n_q, int(rng.integers(1, 25)), b_max)
    return bmatching_to_mincost(normalize_instance(_balanced_sides(inst)))


def k22():
    return bmatching_to_mincost(BMatchingInstance([1, 1], [1, 1], [0, 0, 1, 1], [0, 1, 0, 1]))


class TestMuHat:
    def test_two_arcs(self):
        sol = two_arc([1.0, 2.0], [2.0, 2.0], [1.0, 3.0])
        assert mu_hat(sol) == pytest.approx(1.5)

    def test_scales_with_flow(self):
        sol = two_arc([1.0, 2.0], [2.0, 2.0], [1.0, 3.0])
        sol.f *= 3
        assert mu_hat(sol) == pytest.approx(4.5)

    def test_gap_identity(self):
        sol = two_arc([1.0, 2.0], [2.0, 5.0], [1.0, 3.0])
        assert duality_gap(sol) / mu_hat(sol) == pytest.approx(sol.nu.sum())


class TestCentrality:
    def test_two_arcs(self):
        sol = two_arc([0.9, 1.1], [1.0, 1.0], [1.0, 1.0])
        assert mu_hat(sol) == pytest.approx(1.0)
        assert centrality(sol) == pytest.approx(math.sqrt(0.02))

    def test_params_validation(self):
        for bad in (0.0, 1.0):
            with pytest.raises(ValueError):
                CenteringParams(gamma_hat=bad)
        with pytest.raises(ValueError):
            CenteringParams(term_scale=2.0)
        assert CenteringParams().threshold(10) == pytest.approx(1 / 80)


class TestInitialSolution:
    @settings(max_examples=50, deadline=None)
    @given(seeds)
    def test_properties(self, seed):
        mc = random_mincost(np.random.default_rng(seed))
        sol = initial_solution(mc)
        assert np.all(sol.s == 1) and np.all(sol.f > 0) and np.all(sol.nu >= 1)
        assert mu_hat(sol) == pytest.approx(1.0, abs=1e-12)
        assert centrality(sol) <= 1e-12
        assert check_sigma_flow(mc.graph, sol.f, mc.sigma, tol=1e-12)
        assert sol.nu.sum() <= 3 * sol.m_hat
        assert sol.slack_residual() == 0

    def test_unequal_sides(self):
        inst = BMatchingInstance([2], [1], [0], [0])
        mc = bmatching_to_mincost(BMatchingInstance([1], [1], [0], [0]))
        object.__setattr__(mc, "instance", inst)
        with pytest.raises(DemandError):
            initial_solution(mc)


class TestResistancesAndCongestion:
    def test_unit(self):
        sol = two_arc([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
        assert associated_resistances(sol).values.tolist() == [1.0, 1.0]
        sol.s[0] *= 2
        assert associated_resistances(sol).values[0] == 2.0

    def test_congestion_examples(self):
        sol = two_arc([1.0, 2.0], [1.0, 1.0], [1.0, 2.0])
        assert congestion(sol.f, sol).tolist() == [1.0, 1.0]
        assert congestion([0.0, 0.0], sol).tolist() == [0.0, 0.0]

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_sandwich_on_centered_points(self, seed):
        rng = np.random.default_rng(seed)
        mc = random_mincost(rng)
        sol = initial_solution(mc)
        gamma = CenteringParams().gamma_hat
        solver = PotentialSolver(sol.graph)
        for _ in range(int(rng.integers(0, 6))):
            desc = associated_flow(sol, solver)
            improvement_step(sol, max_step_size(sol, desc.rho, gamma), solver, descent=desc)
        mh = mu_hat(sol)
        desc = associated_flow(sol, solver)
        r = sol.s / sol.f
        # per-arc energy against the measure-weighted congestion
        lhs = r * desc.fhat ** 2
        base = sol.nu * mh * desc.rho ** 2
        assert np.all(lhs >= (1 - gamma) * base * (1 - 1e-9))
        assert np.all(lhs <= (1 + gamma) * base * (1 + 1e-9))
        assert np.all(r * sol.f ** 2 >= (1 - gamma) * sol.nu * mh * (1 - 1e-9))
        # congestion norm against energy
        assert np.sum(sol.nu * desc.rho ** 2) <= desc.energy / ((1 - gamma) * mh) * (1 + 1e-9)


class TestStepSize:
    def test_unit_four_norm(self):
        sol = two_arc([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
        assert max_step_size(sol, np.array([1.0, 0.0]), 1 / 400) == pytest.approx(1 / 20)

    def test_zero_congestion_caps(self):
        sol = two_arc([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
        assert max_step_size(sol, np.zeros(2), 1 / 400) == 0.5

    def test_huge_congestion(self):
        sol = two_arc([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
        assert max_step_size(sol, np.array([1e9, 0.0]), 1 / 400) < 1e-10

    def test_floor_constant(self):
        assert basic_step_constant(1 / 400) == pytest.approx(40 / math.sqrt(399 / 400))


class TestImprovementStep:
    def test_single_edge_progress(self):
        mc = bmatching_to_mincost(BMatchingInstance([1], [1], [0], [0]))
        sol = initial_solution(mc)
        solver = PotentialSolver(sol.graph)
        desc = associated_flow(sol, solver)
        delta = max_step_size(sol, desc.rho, 1 / 400)
        mu0 = mu_hat(sol)
        res = improvement_step(sol, delta, solver, descent=desc)
        assert mu_hat(sol) <= (1 - res.delta) * mu0 + 1e-12
        assert solver.solves == 2

    def test_delta_range(self):
        mc = k22()
        sol = initial_solution(mc)
        with pytest.raises(ValueError):
            improvement_step(sol, 1.0, PotentialSolver(sol.graph))

    def test_zero_delta_keeps_mu(self):
        mc = k22()
        sol = initial_solution(mc)
        mu0 = mu_hat(sol)
        improvement_step(sol, 0.0, PotentialSolver(sol.graph))
        assert mu_hat(sol) <= mu0 + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_step_laws(self, seed):
        rng = np.random.default_rng(seed)
        mc = random_mincost(rng)
        sol = initial_solution(mc)
        params = CenteringParams()
        gh = params.gamma_hat
        solver = PotentialSolver(sol.graph)
        for _ in range(8):
            desc = associated_flow(sol, solver)
            mu0 = mu_hat(sol)
            nu0 = sol.nu.copy()
            e_primal = duality_gap(sol)
            assert desc.energy <= e_primal * (1 + 1e-9)
            assert e_primal <= 4 * sol.m_hat * mu0 * (1 + 1e-9)
            res = improvement_step(sol, max_step_size(sol, desc.rho, gh), solver, params, desc)
            mu1 = mu_hat(sol)
            assert centrality(sol) <= gh * mu1 * (1 + 1e-8)
            assert mu1 <= (1 - res.delta) * mu0 + 1e-9
            assert np.array_equal(sol.nu, nu0)
            assert np.all(sol.f > 0) and np.all(sol.s > 0)
            assert check_sigma_flow(mc.graph, sol.f, mc.sigma, tol=1e-8)
            # the descent point stays within three times the tolerance
            assert res.intermediate_centrality ** 2 <= 9 * gh * gh * mu0 * mu0
            assert res.centering_congestion <= 0.5
            assert res.kappa_hat_norm <= 1 / 16
            cap = 4 * (res.delta * desc.rho + res.kappa_hat) * (1 + 1e-9) + 1e-15
            assert np.all(np.abs(res.kappa) <= cap) and np.all(np.abs(res.kappa_bar) <= cap)
            assert max(np.abs(res.kappa).max(), np.abs(res.kappa_bar).max()) <= 0.5
            assert sol.slack_residual() < 1e-8

    def test_oversized_step_halves_or_faults(self):
        mc = k22()
        sol = initial_solution(mc)
        solver = PotentialSolver(sol.graph)
        rep = RunReport("basic")
        try:
            res = improvement_step(sol, 0.99, solver, report=rep)
        except InvariantFault:
            assert rep.count("retry") == CenteringParams().max_retries + 1
        else:
            assert res.retries == rep.count("retry") and res.delta < 0.99
            assert centrality(sol) <= CenteringParams().gamma_hat * mu_hat(sol) * (1 + 1e-8)


class TestCenteredImplication:
    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_every_arc_near_average(self, seed):
        rng = np.random.default_rng(seed)
        mc = random_mincost(rng)
        sol = initial_solution(mc)
        gh = CenteringParams().gamma_hat
        solver = PotentialSolver(sol.graph)
        for _ in range(10):
            desc = associated_flow(sol, solver)
            improvement_step(sol, max_step_size(sol, desc.rho, gh), solver, descent=desc)
            mh = mu_hat(sol)
            gamma = centrality(sol) / mh
            if gamma <= gh:
                per = sol.f * sol.s / sol.nu
                assert np.all(per >= (1 - gamma) * mh * (1 - 1e-12))
                assert np.all(per <= (1 + gamma) * mh * (1 + 1e-12))


class TestBasicPathFollowing:
    def test_single_edge_yields_perfect_matching(self):
        inst = BMatchingInstance([1], [1], [0], [0])
        mc = bmatching_to_mincost(inst)
        sol = basic_path_following(mc)
        assert mu_hat(sol) <= 1 / (8 * mc.m_hat)
        res = extract_near_perfect(inst, mc, sol.f)
        # cost within 1/2 of optimal leaves at least half a unit on the edge
        assert isinstance(res, FractionalMatching) and res.x[0] >= 0.5
        assert solve_bmatching(inst, SolverConfig(mode="basic")).perfect

    def test_k22(self):
        mc = k22()
        rep = RunReport("basic")
        sol = basic_path_following(mc, report=rep)
        assert duality_gap(sol) <= 0.5
        res = extract_near_perfect(mc.instance, mc, sol.f)
        assert isinstance(res, FractionalMatching) and res.x.sum() >= 1.5
        assert solve_bmatching(mc.instance, SolverConfig(mode="basic")).size == 2

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_step_floor_and_iteration_count(self, seed):
        mc = random_mincost(np.random.default_rng(seed))
        rep = RunReport("basic")
        basic_path_following(mc, report=rep)
        st_ = rep.stats
        m_hat = mc.m_hat
        assert st_["empirical_step_constant"] <= st_["step_constant_bound"]
        for rec in rep.iterations:
            assert rec["delta"] >= 1 / (st_["step_constant_bound"] * math.sqrt(m_hat))
        assert st_["iterations"] <= st_["step_constant_bound"] * math.sqrt(m_hat) * math.log(8 * m_hat) + 1
        assert rep.auditor.ok


class TestDualPotentials:
    def test_lengths_give_zero(self):
        mc = k22()
        assert np.all(dual_potentials_from_slacks(mc, mc.lengths) == 0)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        mc = random_mincost(rng)
        g = mc.graph
        y = rng.normal(size=g.n)
        y -= y[0]
        ell = np.full(g.m, 10.0)
        s = ell - y[g.head] + y[g.tail]
        assert dual_potentials_from_slacks(mc, s, ell) == pytest.approx(y, abs=1e-9)
        # translation leaves the slacks alone
        y2 = y + 3.0
        assert np.allclose(ell - y2[g.head] + y2[g.tail], s)

    def test_solution_embedding_recovered(self):
        mc = k22()
        sol = basic_path_following(mc)
        y = dual_potentials_from_slacks(mc, sol.s, sol.lengths)
        assert y - y[0] == pytest.approx(sol.y - sol.y[0], abs=1e-8)

    def test_inconsistent_slacks(self):
        g = DirectedMultigraph.from_arcs(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(EmbeddingError):
            dual_potentials_from_slacks(g, [1.0, 1.0, 5.0], [1.0, 1.0, 1.0])

    def test_bare_graph_needs_lengths(self):
        g = DirectedMultigraph.from_arcs(2, [(0, 1)])
        with pytest.raises(ValueError):
            dual_potentials_from_slacks(g, [1.0])
