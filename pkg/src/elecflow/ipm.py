"""Primal-dual interior-point state and the electrical-flow path follower.

A solution keeps a strictly positive flow ``f``, slacks ``s`` and measures
``nu`` on a hub graph, together with the vertex embedding ``y`` that induces
the slacks (``s_e = l_e - y_head + y_tail``). Progress is measured by
``mu_hat = sum f*s / sum nu`` and the central-path distance by the
``nu``-weighted 2-norm of ``f*s/nu - mu_hat``.

One improvement step is two Laplacian solves: a descent move along the
electrical flow for resistances ``s/f`` followed by a centering correction
whose demand is the imbalance created when each arc is rescaled back to the
average. Every step re-checks its own guarantees and halves the step size on
a numerical miss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .electrical import CholeskyFactor, LaplacianPattern, Resistances, _pcg
from .errors import DemandError, DimensionError, EmbeddingError, InvariantFault
from .graph import DirectedMultigraph, net_inflow
from .reduction import MinCostInstance
from .report import Auditor, RunReport

log = logging.getLogger(__name__)

__all__ = [
    "CenteringParams",
    "PrimalDualSolution",
    "PotentialSolver",
    "Descent",
    "StepResult",
    "mu_hat",
    "centrality",
    "duality_gap",
    "weighted_norm",
    "initial_solution",
    "associated_resistances",
    "associated_flow",
    "congestion",
    "max_step_size",
    "basic_step_constant",
    "improvement_step",
    "basic_path_following",
    "dual_potentials_from_slacks",
]


@dataclass
class CenteringParams:
    """Central-path tolerance and numerical guards.

    ``term_scale`` multiplies the stopping threshold ``1/(8 m_hat)`` and may
    only lower it.
    """

    gamma_hat: float = 1 / 400
    term_scale: float = 1.0
    max_retries: int = 5
    centrality_rtol: float = 1e-8
    mu_atol: float = 1e-9
    rel_tol: float = 1e-9
    budget_factor: float = 2.0

    def __post_init__(self) -> None:
        if not 0 < self.gamma_hat < 1:
            raise ValueError("gamma_hat must lie in (0, 1)")
        if not 0 < self.term_scale <= 1:
            raise ValueError("term_scale must lie in (0, 1]; the threshold can only be lowered")

    def threshold(self, m_hat: int) -> float:
        return self.term_scale / (8.0 * m_hat)


@dataclass(eq=False)
class PrimalDualSolution:
    """Mutable primal-dual point. Arrays are owned and updated in place by steps."""

    graph: DirectedMultigraph
    sigma: np.ndarray
    f: np.ndarray
    s: np.ndarray
    nu: np.ndarray
    lengths: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        m = self.graph.m
        for name in ("f", "s", "nu", "lengths"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.size != m:
                raise DimensionError(f"{name} has {a.size} entries for {m} arcs")
            setattr(self, name, a.copy())
        self.sigma = np.asarray(self.sigma, dtype=float).copy()
        self.y = np.asarray(self.y, dtype=float).copy()
        if self.sigma.size != self.graph.n or self.y.size != self.graph.n:
            raise DimensionError("sigma and y need one entry per vertex")

    @property
    def m_hat(self) -> int:
        return self.graph.m

    @property
    def mu(self) -> np.ndarray:
        return self.f * self.s

    def copy(self) -> "PrimalDualSolution":
        return PrimalDualSolution(self.graph, self.sigma, self.f, self.s, self.nu, self.lengths, self.y)

    def slack_residual(self) -> float:
        """``max |l - y_head + y_tail - s|``: distance from the embedding."""
        g = self.graph
        return float(np.max(np.abs(self.lengths - self.y[g.head] + self.y[g.tail] - self.s), initial=0.0))


def weighted_norm(x: np.ndarray, nu: np.ndarray, p: float = 2) -> float:
    """``(sum nu_e |x_e|^p)^(1/p)``."""
    return float(np.sum(nu * np.abs(x) ** p) ** (1.0 / p))


def mu_hat(sol: PrimalDualSolution) -> float:
    return float(np.dot(sol.f, sol.s) / np.sum(sol.nu))


def centrality(sol: PrimalDualSolution) -> float:
    """Weighted distance of the per-arc ``f*s/nu`` from their average."""
    mh = mu_hat(sol)
    return weighted_norm(sol.f * sol.s / sol.nu - mh, sol.nu)


def duality_gap(sol: PrimalDualSolution) -> float:
    return float(np.dot(sol.f, sol.s))


def associated_resistances(sol: PrimalDualSolution) -> Resistances:
    return Resistances(sol.s / sol.f)


def congestion(fhat, sol: PrimalDualSolution) -> np.ndarray:
    return np.abs(np.asarray(fhat, dtype=float)) / sol.f


def max_step_size(sol: PrimalDualSolution, rho: np.ndarray, gamma_hat: float) -> float:
    n4 = weighted_norm(rho, sol.nu, 4)
    if n4 == 0:
        return 0.5
    return min(math.sqrt(gamma_hat) / n4, 0.5)


def basic_step_constant(gamma_hat: float) -> float:
    """``c`` with ``max_step_size >= 1/(c sqrt(m_hat))`` for any centered point.

    Follows from ``||rho||_4 <= ||rho||_2`` and the energy bound
    ``(1-gamma) mu_hat ||rho||_2^2 <= E(f_hat) <= 4 m_hat mu_hat``.
    """
    return 2.0 / (math.sqrt(gamma_hat) * math.sqrt(1.0 - gamma_hat))


def initial_solution(mc: MinCostInstance) -> PrimalDualSolution:
    """Exactly centered start with ``s = 1``, ``y = 0`` and ``mu_hat = 1``.

    Direct arcs carry one unit each. At ``s_p`` the hub arcs absorb the gap
    ``r_p`` between the number of direct copies leaving ``s_p`` and ``b_p``
    (and symmetrically at ``t_q``); measures equal flows.
    """
    inst = mc.instance
    if int(inst.b_p.sum()) != int(inst.b_q.sum()):
        raise DemandError("side demands differ")
    g = mc.graph
    f = np.ones(g.m)
    d = inst.thickness
    copies_p = np.bincount(inst.edge_p, weights=d, minlength=inst.n_p)
    copies_q = np.bincount(inst.edge_q, weights=d, minlength=inst.n_q)
    r_p = copies_p - inst.b_p
    r_q = copies_q - inst.b_q
    sv = 1 + np.arange(inst.n_p)
    tv = 1 + inst.n_p + np.arange(inst.n_q)
    # s_p: in-flow from hub minus out-flow must equal -b_p
    f[mc.hub_in[sv]] = np.where(r_p >= 0, 1.0, 1.0 - r_p)
    f[mc.hub_out[sv]] = np.where(r_p >= 0, r_p + 1.0, 1.0)
    # t_q mirrors s_p with the hub arcs swapped
    f[mc.hub_out[tv]] = np.where(r_q >= 0, 1.0, 1.0 - r_q)
    f[mc.hub_in[tv]] = np.where(r_q >= 0, r_q + 1.0, 1.0)
    sol = PrimalDualSolution(g, mc.sigma, f, np.ones(g.m), f.copy(), mc.lengths, np.zeros(g.n))
    return sol


class PotentialSolver:
    """Laplacian solves on one fixed graph, with a call counter.

    ``method="cholesky"`` refactors numerically on every call while reusing
    the ordering and symbolic analysis; ``"cg"`` runs preconditioned CG to
    relative energy error ``eps``.
    """

    def __init__(self, graph: DirectedMultigraph, method: str = "cholesky", eps: float = 1e-10):
        if method not in ("cholesky", "cg"):
            raise ValueError(f"unknown method {method!r}")
        self.graph = graph
        self.method = method
        self.eps = eps
        self.pattern = LaplacianPattern.of(graph)
        self.solves = 0

    def __call__(self, r: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        self.solves += 1
        c = 1.0 / r
        if self.method == "cholesky":
            return CholeskyFactor(self.pattern, c).solve(sigma)
        pat = self.pattern
        if pat.nr == 0:
            return np.zeros(pat.n)
        A = pat.reduced_matrix(c).tocsr()
        return pat.from_factor_order(_pcg(A, pat.to_factor_order(sigma), self.eps))


@dataclass
class Descent:
    """Electrical flow associated with a solution (resistances ``s/f``)."""

    r: np.ndarray
    phi: np.ndarray
    fhat: np.ndarray
    energy: float
    rho: np.ndarray


def associated_flow(sol: PrimalDualSolution, solver: PotentialSolver) -> Descent:
    g = sol.graph
    r = sol.s / sol.f
    phi = solver(r, sol.sigma)
    fhat = (phi[g.head] - phi[g.tail]) / r
    return Descent(r, phi, fhat, float(np.dot(sol.sigma, phi)), np.abs(fhat) / sol.f)


@dataclass
class StepResult:
    """Outcome of an accepted step: the step size used and the relative changes."""

    delta: float
    requested_delta: float
    retries: int
    mu_before: float
    mu_after: float
    centrality_after: float
    kappa: np.ndarray
    kappa_bar: np.ndarray
    kappa_hat: np.ndarray
    kappa_hat_norm: float
    intermediate_centrality: float
    centering_congestion: float
    failures: list[str] = field(default_factory=list)


def _try_step(sol: PrimalDualSolution, desc: Descent, delta: float, solver: PotentialSolver,
              params: CenteringParams):
    """Candidate arrays for one step plus the names of violated step laws."""
    g = sol.graph
    head, tail = g.head, g.tail
    f, s, nu, y = sol.f, sol.s, sol.nu, sol.y
    tol = params.rel_tol
    gh = params.gamma_hat
    mu0 = float(np.dot(f, s) / nu.sum())
    dphi = desc.phi[head] - desc.phi[tail]
    q = delta / (1.0 - delta)
    fb = (1.0 - delta) * f + delta * desc.fhat
    sb = s - q * dphi
    yb = y + q * desc.phi
    if np.any(fb <= 0) or np.any(sb <= 0):
        return None, ["descent-positivity"]
    mub_e = fb * sb / nu
    mub = float(np.dot(fb, sb) / nu.sum())
    cent_mid = weighted_norm(mub_e - mub, nu)
    if cent_mid * cent_mid > 9 * gh * gh * mub * mub * (1 + tol):
        # the centering solve cannot repair this; skip it and retry smaller
        return None, ["intermediate-centrality"]
    f_star = (mub_e - mub) / mub_e * fb
    fp = mub / mub_e * fb
    sig_t = net_inflow(g, f_star)
    r_t = sb / fp
    phi_t = solver(r_t, sig_t)
    dphi_t = phi_t[head] - phi_t[tail]
    f_t = dphi_t / r_t
    f1 = fp + f_t
    s1 = sb - dphi_t
    y1 = yb + phi_t
    if np.any(f1 <= 0) or np.any(s1 <= 0):
        return None, ["positivity"]
    bad: list[str] = []
    rho_c = float(np.max(np.abs(f_t) / fp, initial=0.0))
    if rho_c > 0.5 * (1 + tol):
        bad.append("centering-congestion")
    kappa = (1.0 - delta) * (s1 / f1) / desc.r - 1.0
    kappa_bar = (1.0 - delta) * f / f1 - 1.0
    kappa_hat = np.abs(mub_e - mub) / mub_e + np.abs(f_t) / fp
    kh_norm = weighted_norm(kappa_hat, nu)
    if kh_norm > (1 / 16) * (1 + tol):
        bad.append("kappa-hat-norm")
    cap = 4 * (delta * desc.rho + kappa_hat) * (1 + tol) + 1e-15
    if np.any(np.abs(kappa) > cap) or np.any(np.abs(kappa_bar) > cap):
        bad.append("kappa-bound")
    if max(np.max(np.abs(kappa), initial=0.0), np.max(np.abs(kappa_bar), initial=0.0)) > 0.5:
        bad.append("kappa-sup")
    mu1 = float(np.dot(f1, s1) / nu.sum())
    cent1 = weighted_norm(f1 * s1 / nu - mu1, nu)
    if cent1 > gh * mu1 * (1 + params.centrality_rtol):
        bad.append("centrality")
    if mu1 > (1.0 - delta) * mu0 + params.mu_atol:
        bad.append("mu-progress")
    res = StepResult(delta, delta, 0, mu0, mu1, cent1, kappa, kappa_bar, kappa_hat, kh_norm, cent_mid, rho_c)
    return (res, f1, s1, y1), bad


def improvement_step(sol: PrimalDualSolution, delta: float, solver: PotentialSolver,
                     params: CenteringParams | None = None, descent: Descent | None = None,
                     step: int | None = None, auditor: Auditor | None = None,
                     report: RunReport | None = None) -> StepResult:
    """Descent plus centering with step size ``delta``; mutates ``sol``.

    If any step law fails (centrality, progress, the relative-change bounds,
    positivity) the step is recomputed with half the step size, at most
    ``params.max_retries`` times; then ``InvariantFault`` is raised. The
    descent flow does not depend on ``delta`` and is solved once.
    """
    params = params or CenteringParams()
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    desc = descent if descent is not None else associated_flow(sol, solver)
    requested = delta
    last: list[str] = []
    for attempt in range(params.max_retries + 1):
        cand, bad = _try_step(sol, desc, delta, solver, params)
        if cand is not None and not bad:
            res, f1, s1, y1 = cand
            sol.f[:] = f1
            sol.s[:] = s1
            sol.y[:] = y1
            res.requested_delta = requested
            res.retries = attempt
            if auditor is not None:
                for law in ("centrality", "mu-progress", "kappa-hat-norm", "centering-congestion"):
                    auditor.require(law, True, step)
            return res
        last = bad
        if report is not None:
            report.event("retry", step=step, delta=delta, laws=bad)
        log.debug("step %s: laws %s failed at delta=%.3g, halving", step, bad, delta)
        delta *= 0.5
    raise InvariantFault(last[0] if last else "step", f"step laws {last} still fail after "
                         f"{params.max_retries} halvings of delta={requested:.3g}", step)


def check_descent(sol: PrimalDualSolution, desc: Descent, mh: float, params: CenteringParams,
                  auditor: Auditor, step: int | None) -> float:
    """Energy chain ``E(f_hat) <= E(f) <= 4 m_hat mu_hat``; returns ``E(f)``."""
    e_primal = float(np.dot(sol.f, sol.s))
    tol = params.rel_tol
    auditor.check("energy-chain-lower", desc.energy, e_primal * (1 + tol), step)
    auditor.check("energy-chain-upper", e_primal, 4 * sol.m_hat * mh * (1 + tol), step)
    auditor.check("measure-total", float(sol.nu.sum()), 4 * sol.m_hat * (1 + 1e-12), step)
    return e_primal


def basic_path_following(mc: MinCostInstance, params: CenteringParams | None = None,
                         solver: PotentialSolver | None = None, report: RunReport | None = None,
                         c_energy: float = 256.0, sol: PrimalDualSolution | None = None) -> PrimalDualSolution:
    """Follow the central path with the largest safe step until ``mu_hat <= 1/(8 m_hat)``."""
    params = params or CenteringParams()
    sol = sol if sol is not None else initial_solution(mc)
    solver = solver or PotentialSolver(sol.graph)
    report = report if report is not None else RunReport("basic")
    aud = report.auditor
    m_hat = sol.m_hat
    thr = params.threshold(m_hat)
    c_floor = basic_step_constant(params.gamma_hat)
    budget = int(params.budget_factor * c_floor * math.sqrt(m_hat) * math.log(8 * m_hat)) + 10
    worst_c = 0.0
    t = 0
    mh = mu_hat(sol)
    aud.check("centrality", centrality(sol), params.gamma_hat * mh * (1 + params.centrality_rtol), 0)
    while mh > thr:
        if t >= budget:
            raise InvariantFault("iteration-budget", f"{t} steps without reaching mu_hat <= {thr:.3g}", t)
        desc = associated_flow(sol, solver)
        e_primal = check_descent(sol, desc, mh, params, aud, t)
        aud.check("energy-sandwich-lower", m_hat * mh / c_energy, desc.energy * (1 + params.rel_tol), t)
        aud.check("energy-sandwich-upper", desc.energy, c_energy * m_hat * mh * (1 + params.rel_tol), t)
        delta = max_step_size(sol, desc.rho, params.gamma_hat)
        res = improvement_step(sol, delta, solver, params, desc, t, aud, report)
        c_emp = 1.0 / (res.delta * math.sqrt(m_hat))
        worst_c = max(worst_c, c_emp)
        aud.check("step-floor", c_emp, c_floor, t)
        mh_new = res.mu_after
        report.iteration(t=t, mode="basic", mu_hat=mh_new, mu_prev=mh, centrality=res.centrality_after,
                         delta=res.delta, energy=desc.energy, energy_mu=mh, energy_primal=e_primal,
                         sum_nu=float(sol.nu.sum()), m_hat=m_hat, retries=res.retries, c_step=c_emp)
        mh = mh_new
        t += 1
    report.stats.update(iterations=t, empirical_step_constant=worst_c, step_constant_bound=c_floor,
                        solves=solver.solves, final_mu_hat=mh)
    return sol


def dual_potentials_from_slacks(mc: MinCostInstance | DirectedMultigraph, s, lengths=None,
                                root: int = 0, tol: float = 1e-9) -> np.ndarray:
    """Embedding ``y`` with ``y[root] = 0`` and ``l_e - y_head + y_tail = s_e``.

    Values are fixed along a BFS spanning forest (every other component root
    is pinned to zero) and then checked on every arc.
    """
    if isinstance(mc, MinCostInstance):
        g = mc.graph
        lengths = mc.lengths if lengths is None else lengths
    else:
        g = mc
        if lengths is None:
            raise ValueError("lengths are required for a bare graph")
    s = np.asarray(s, dtype=float)
    ell = np.asarray(lengths, dtype=float)
    if s.size != g.m or ell.size != g.m:
        raise DimensionError("slacks and lengths need one entry per arc")
    # y_head - y_tail = l - s along each arc
    w = ell - s
    n = g.n
    y = np.full(n, np.nan)
    adj = sp.csr_matrix((np.ones(2 * g.m), (np.concatenate([g.tail, g.head]), np.concatenate([g.head, g.tail]))),
                        shape=(n, n))
    first_arc: dict[tuple[int, int], int] = {}
    for e in range(g.m):
        first_arc.setdefault((int(g.tail[e]), int(g.head[e])), e)
    roots = [root] + [v for v in range(n) if v != root]
    for r0 in roots:
        if not np.isnan(y[r0]):
            continue
        order, pred = csgraph.breadth_first_order(adj, r0, directed=False, return_predecessors=True)
        y[r0] = 0.0
        for v in order[1:]:
            u = int(pred[v])
            e = first_arc.get((u, int(v)))
            if e is not None:
                y[v] = y[u] + w[e]
            else:
                y[v] = y[u] - w[first_arc[(int(v), u)]]
    resid = np.abs(ell - y[g.head] + y[g.tail] - s)
    scale = 1.0 + float(np.max(np.abs(ell), initial=0.0))
    if np.any(resid > tol * scale):
        e = int(np.argmax(resid))
        raise EmbeddingError(f"arc {e} slack differs from every embedding by {resid[e]:.3e}")
    return y
