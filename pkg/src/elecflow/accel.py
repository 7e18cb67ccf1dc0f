"""Accelerated path following: congestion bands, stretching and improvement phases.

A phase takes progress steps of a fixed size ``1/(2 c_delta theta sqrt(m_hat))``
as long as the associated electrical flow is smooth on heavy arcs, meaning
no congestion band carries more measure than its allowance. Otherwise the
heavy arcs of the most congested offending band are stretched (their
resistance doubles), which provably raises the electrical energy. Because the
energy stays within a constant factor of ``m_hat * mu_hat``, only a bounded
number of such boosts can happen per phase.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import InvariantFault
from .ipm import (
    CenteringParams,
    Descent,
    PotentialSolver,
    PrimalDualSolution,
    StepResult,
    associated_flow,
    centrality,
    improvement_step,
    initial_solution,
    mu_hat,
    weighted_norm,
)
from .reduction import MinCostInstance
from .report import Auditor, RunReport

log = logging.getLogger(__name__)

__all__ = [
    "SmoothnessParams",
    "StretchLedger",
    "Violation",
    "PhaseHooks",
    "PhaseStats",
    "congestion_bands",
    "classify_congestion",
    "is_theta_smooth",
    "alpha_stretch",
    "heavy_arcs",
    "stretch_boost",
    "theta_improvement_phase",
    "accelerated_solve",
    "restricted_check",
]

UNCLASSIFIED = np.iinfo(np.int64).max


@dataclass
class SmoothnessParams:
    """Exponent ``eta``, the named constants and everything derived from ``m_hat``."""

    m_hat: int
    eta: float = 1 / 14
    c_delta: float = 1.0
    c_E: float = 256.0
    c_incr: float = 1 / 36
    c_decr: float = 8.0
    c_heavy: float = 16.0
    c_restrict: float = 8.0
    budget_scale: float = 1.0
    phase_budget_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.m_hat < 1:
            raise ValueError("m_hat must be positive")
        if not 0 < self.eta < 1 / 6:
            raise ValueError("eta must lie in (0, 1/6)")
        for f in fields(self):
            if f.name not in ("m_hat", "eta") and getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")

    @classmethod
    def with_overrides(cls, m_hat: int, overrides: dict | None = None) -> "SmoothnessParams":
        known = {f.name for f in fields(cls)} - {"m_hat"}
        overrides = dict(overrides or {})
        bad = set(overrides) - known
        if bad:
            raise ValueError(f"unknown constants: {sorted(bad)}")
        return cls(m_hat, **{k: float(v) for k, v in overrides.items()})

    @property
    def theta(self) -> float:
        return self.m_hat ** (-self.eta)

    @property
    def delta(self) -> float:
        """Progress-step size."""
        return min(1.0 / (2 * self.c_delta * self.theta * math.sqrt(self.m_hat)), 0.5)

    @property
    def lambda_hat(self) -> float:
        return (1.0 - self.delta) ** (self.theta ** -2)

    @property
    def progress_steps(self) -> int:
        """Progress steps per phase; at least one."""
        return max(1, math.ceil(self.theta ** -2 - 1e-12))

    @property
    def T_hat(self) -> int:
        m = self.m_hat
        return max(1, math.ceil(2 * self.c_delta * self.theta ** 3 * math.sqrt(m) * math.log(8 * m)))

    @property
    def T_s(self) -> float:
        return self.c_decr / self.c_incr * self.theta ** -2 * math.log(self.c_E ** 2 * self.m_hat)

    @property
    def nu_max(self) -> float:
        return self.c_E ** 6 * self.theta ** 6

    @property
    def l_max(self) -> int:
        return int(math.floor(math.log2(self.theta ** -3)))

    @property
    def length_budget(self) -> float:
        m = self.m_hat
        return self.budget_scale * m ** (0.5 - self.eta) * max(1.0, math.log2(m))

    def f_heavy(self, mu: float) -> float:
        return self.m_hat ** (0.5 - 3 * self.eta) * mu / self.c_heavy

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(theta=self.theta, delta=self.delta, lambda_hat=self.lambda_hat, T_hat=self.T_hat,
                 T_s=self.T_s, nu_max=self.nu_max, l_max=self.l_max, length_budget=self.length_budget)
        return d


@dataclass
class StretchLedger:
    """Length and measure accounting for stretched arcs.

    Only arcs ``0 .. n_tracked-1`` are accounted; auxiliary arcs, which exist
    for one phase only, are appended after them and never recorded.
    """

    n_tracked: int
    budget: float
    per_arc_cap: float = 1.0
    per_arc: np.ndarray = field(init=False)
    stretches: np.ndarray = field(init=False)
    total: float = 0.0
    measure_added: float = 0.0

    def __post_init__(self) -> None:
        self.per_arc = np.zeros(self.n_tracked)
        self.stretches = np.zeros(self.n_tracked, dtype=np.int64)

    def record(self, arcs: np.ndarray, increase: np.ndarray, measure: float, auditor: Auditor,
               step: int | None = None) -> None:
        arcs = np.asarray(arcs, dtype=np.int64)
        if arcs.size and arcs.max() >= self.n_tracked:
            raise InvariantFault("ledger-scope", "auxiliary arc passed to the length ledger", step)
        np.add.at(self.per_arc, arcs, increase)
        np.add.at(self.stretches, arcs, 1)
        self.total += float(np.sum(increase))
        self.measure_added += measure
        if arcs.size:
            auditor.check("ledger-per-arc", float(self.per_arc[arcs].max()), self.per_arc_cap * (1 + 1e-12), step)
        auditor.check("ledger-total", self.total, self.budget * (1 + 1e-12), step)


@dataclass(frozen=True)
class Violation:
    """Smallest band breaking the smoothness allowance.

    ``l_star`` uses the allowance ``floor(theta^3 8^l)``; ``boost_l`` is the
    smallest band whose measure also exceeds ``max(theta^3 8^l, 1)``, the
    trigger for a stretch-boost (``None`` when no band qualifies).
    """

    l_star: int
    measure: float
    allowance: float
    boost_l: int | None


def congestion_bands(rho: np.ndarray, m_hat: int, l_max: int) -> np.ndarray:
    """Band index per arc; ``UNCLASSIFIED`` for ``rho = 0`` or bands past ``l_max``.

    ``l = floor(log2(sqrt(m_hat)/rho))`` is read off the binary exponent so
    band boundaries are exact at powers of two.
    """
    rho = np.asarray(rho, dtype=float)
    band = np.full(rho.size, UNCLASSIFIED, dtype=np.int64)
    pos = rho > 0
    _, e = np.frexp(math.sqrt(m_hat) / rho[pos])
    lv = e.astype(np.int64) - 1
    lv[lv > l_max] = UNCLASSIFIED
    band[pos] = lv
    return band


def classify_congestion(rho, theta: float, m_hat: int) -> dict[int, np.ndarray]:
    """Arcs per band ``l``: ``sqrt(m_hat)/2^(l+1) < rho_e <= sqrt(m_hat)/2^l``."""
    l_max = int(math.floor(math.log2(theta ** -3)))
    band = congestion_bands(rho, m_hat, l_max)
    out: dict[int, np.ndarray] = {}
    for lv in np.unique(band[band != UNCLASSIFIED]):
        out[int(lv)] = np.flatnonzero(band == lv)
    return out


def is_theta_smooth(classes: dict[int, np.ndarray], nu: np.ndarray, theta: float,
                    subset: np.ndarray | None = None) -> Violation | None:
    """``None`` when smooth on ``subset`` (a boolean arc mask), else the violation."""
    l_star = None
    found = (0.0, 0.0)
    boost_l = None
    for lv in sorted(classes):
        arcs = classes[lv]
        if subset is not None:
            arcs = arcs[subset[arcs]]
        meas = float(nu[arcs].sum())
        cap = theta ** 3 * 8.0 ** lv
        if l_star is None and meas > math.floor(cap):
            l_star, found = lv, (meas, float(math.floor(cap)))
        if boost_l is None and meas > max(cap, 1.0):
            boost_l = lv
        if l_star is not None and boost_l is not None:
            break
    if l_star is None:
        return None
    return Violation(l_star, found[0], found[1], boost_l)


def heavy_arcs(sol: PrimalDualSolution, params: SmoothnessParams, mu: float | None = None) -> np.ndarray:
    """Boolean mask of arcs with ``f_e >= nu_e * f_heavy``."""
    mu = mu_hat(sol) if mu is None else mu
    return sol.f >= sol.nu * params.f_heavy(mu)


def alpha_stretch(sol: PrimalDualSolution, arcs, alpha, gamma: float, auditor: Auditor,
                  ledger: StretchLedger | None = None, step: int | None = None) -> np.ndarray:
    """Grow the length and slack of ``arcs`` by ``alpha * s`` and the measure by ``1 + beta``.

    Resistances scale by exactly ``1 + alpha`` and ``mu_hat`` is unchanged.
    Returns the measure factors ``beta``.
    """
    arcs = np.asarray(arcs, dtype=np.int64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), arcs.shape)
    if np.any(alpha < 0):
        raise ValueError("alpha must be nonnegative")
    mu = mu_hat(sol)
    fs = sol.f[arcs] * sol.s[arcs]
    beta = alpha * fs / (sol.nu[arcs] * mu)
    tol = 1e-9
    auditor.check("stretch-beta-lower", float(np.max((1 - gamma) * alpha - beta, initial=0.0)), tol * float(np.max(alpha, initial=0)), step)
    auditor.check("stretch-beta-upper", float(np.max(beta - (1 + gamma) * alpha, initial=0.0)), tol * float(np.max(alpha, initial=0)), step)
    inc = alpha * sol.s[arcs]
    added = float(np.sum(beta * sol.nu[arcs]))
    sol.lengths[arcs] += inc
    sol.s[arcs] *= 1 + alpha
    sol.nu[arcs] *= 1 + beta
    if ledger is not None:
        ledger.record(arcs, inc, added, auditor, step)
    return beta


def stretch_boost(sol: PrimalDualSolution, arcs, params: SmoothnessParams, gamma: float,
                  ledger: StretchLedger, auditor: Auditor, step: int | None = None) -> float:
    """1-stretch every arc in ``arcs`` (all heavy); returns the measure of the set."""
    arcs = np.asarray(arcs, dtype=np.int64)
    if arcs.size == 0:
        raise ValueError("stretch-boost needs a nonempty arc set")
    mu = mu_hat(sol)
    auditor.require("boost-heavy-only", bool(np.all(sol.f[arcs] >= sol.nu[arcs] * params.f_heavy(mu))), step,
                    "stretch-boost selected a light arc")
    m = params.m_hat
    bound = params.c_heavy * (1 + gamma) * m ** (3 * params.eta) / math.sqrt(m)
    auditor.check("boost-length-increase", float(sol.s[arcs].max()), bound * (1 + 1e-9), step)
    meas = float(sol.nu[arcs].sum())
    auditor.check("boost-measure", meas, params.nu_max, step)
    alpha_stretch(sol, arcs, 1.0, gamma, auditor, ledger, step)
    return meas


def restricted_check(lam, nu, tau: float) -> bool:
    """Measure of ``{e : 2^-(l+1) < |lam_e| <= 2^-l}`` at most ``tau 8^l`` for all ``l >= 0``."""
    lam = np.abs(np.asarray(lam, dtype=float))
    nu = np.asarray(nu, dtype=float)
    pos = (lam > 0) & (lam <= 1)
    if not np.any(pos):
        return True
    m, e = np.frexp(lam[pos])
    # lam = m 2^e with m in [1/2, 1), so l = -e, and an exact power of two drops to the next band
    lv = -e.astype(np.int64) + (m == 0.5).astype(np.int64)
    meas = np.bincount(lv, weights=nu[pos])
    return bool(np.all(meas <= tau * 8.0 ** np.arange(meas.size) * (1 + 1e-12)))


@dataclass
class PhaseHooks:
    """Callbacks that let the preconditioner take part in a phase.

    ``after_progress(sol, result, step)`` runs after every progress step.
    ``watchdog(sol, descent, heavy, mu, step)`` inspects each flow before the
    phase decides between a boost and a progress step.
    """

    after_progress: Callable[[PrimalDualSolution, StepResult, int], None] | None = None
    watchdog: Callable[[PrimalDualSolution, Descent, np.ndarray, float, int], None] | None = None


@dataclass
class PhaseStats:
    mu_start: float
    mu_end: float
    progress_steps: int
    boosts: int
    truncated: bool
    steps_taken: int


def theta_improvement_phase(sol: PrimalDualSolution, solver: PotentialSolver, params: SmoothnessParams,
                            cparams: CenteringParams, ledger: StretchLedger, report: RunReport,
                            hooks: PhaseHooks | None = None, phase: int = 0, step0: int = 0,
                            stop_mu: float = 0.0, arc_copies: float | None = None) -> PhaseStats:
    """Reduce ``mu_hat`` by ``lambda_hat`` with progress steps and stretch-boosts.

    Only arcs ``0 .. ledger.n_tracked-1`` are eligible for boosts. The phase
    ends as soon as ``mu_hat`` reaches the target or ``stop_mu``; the latter
    marks it truncated. ``arc_copies`` is the arc count with multiplicities
    used for the energy chain (defaults to the number of arcs).
    """
    hooks = hooks or PhaseHooks()
    aud = report.auditor
    m_hat = params.m_hat
    theta = params.theta
    gamma = cparams.gamma_hat
    rt = cparams.rel_tol
    n_base = ledger.n_tracked
    copies = float(arc_copies if arc_copies is not None else sol.m_hat)
    base = np.zeros(sol.m_hat, dtype=bool)
    base[:n_base] = True
    mu0 = mu_hat(sol)
    target = params.lambda_hat * mu0
    delta0 = params.delta
    allowed = float(params.progress_steps)
    decr = 1 + params.c_decr * theta ** 2 * math.log(m_hat)
    progress = boosts = 0
    t = step0
    desc = associated_flow(sol, solver)
    while True:
        mh = mu_hat(sol)
        if mh <= target or mh <= stop_mu:
            break
        aud.check("energy-sandwich-lower", m_hat * mh / params.c_E, desc.energy * (1 + rt), t)
        aud.check("energy-sandwich-upper", desc.energy, params.c_E * m_hat * mh * (1 + rt), t)
        heavy = heavy_arcs(sol, params, mh)
        aud.require("aux-light", not bool(np.any(heavy & ~base)), t, "an auxiliary arc is heavy")
        band = congestion_bands(desc.rho, m_hat, params.l_max)
        classes = {int(lv): np.flatnonzero(band == lv) for lv in np.unique(band[band != UNCLASSIFIED])}
        if hooks.watchdog is not None:
            hooks.watchdog(sol, desc, heavy, mh, t)
        # auxiliary arcs are never boosted, even when the law above was only recorded
        boostable = heavy & base
        viol = is_theta_smooth(classes, sol.nu, theta, boostable)
        if viol is not None and viol.boost_l is not None:
            arcs = classes[viol.boost_l]
            arcs = arcs[boostable[arcs]]
            boosts += 1
            aud.check("boost-count", boosts, params.T_s, t)
            e_before = desc.energy
            meas = stretch_boost(sol, arcs, params, gamma, ledger, aud, t)
            aud.check("measure-total", float(sol.nu[:n_base].sum()), 4 * m_hat * (1 + 1e-12), t)
            desc = associated_flow(sol, solver)
            ratio = desc.energy / e_before
            aud.check("boost-energy-increase", (1 + params.c_incr * theta ** 2) * (1 - 1e-9), ratio, t)
            aud.check("boost-energy-cap", ratio, params.c_E ** 2, t)
            strong = 1 + params.c_incr * theta ** 2 * meas ** (1 / 3)
            report.event("boost", phase=phase, step=t, l_star=viol.boost_l, nu_set=meas, arcs=int(arcs.size),
                         energy_before=e_before, energy_after=desc.energy, ratio=ratio,
                         strong_bound=strong, strong_ok=bool(ratio >= strong * (1 - 1e-9)),
                         theta=theta, T_s=params.T_s)
            continue
        progress += 1
        aud.check("phase-progress-steps", progress, allowed + 1e-9, t)
        e_primal = float(np.dot(sol.f, sol.s))
        aud.check("energy-chain-lower", desc.energy, e_primal * (1 + rt), t)
        aud.check("energy-chain-upper", e_primal, 4 * copies * mh * (1 + rt), t)
        safe = math.sqrt(gamma) / max(weighted_norm(desc.rho, sol.nu, 4), 1e-300)
        res = improvement_step(sol, delta0, solver, cparams, desc, t, aud, report)
        allowed += delta0 / res.delta - 1.0
        aud.require("kappa-restricted", restricted_check(res.kappa, sol.nu, params.c_restrict), t,
                    "relative resistance changes are not restricted")
        aud.require("kappa-bar-restricted", restricted_check(res.kappa_bar, sol.nu, params.c_restrict), t,
                    "relative flow changes are not restricted")
        if hooks.after_progress is not None:
            hooks.after_progress(sol, res, t)
        aud.check("measure-total", float(sol.nu[:n_base].sum()), 4 * m_hat * (1 + 1e-12), t)
        nxt = associated_flow(sol, solver)
        aud.check("progress-energy-decrease", desc.energy, nxt.energy * decr * (1 + 1e-9), t)
        report.event("progress", phase=phase, step=t, energy=desc.energy, energy_next=nxt.energy,
                     theta=theta, m_hat=m_hat, delta=res.delta, delta_safe=safe,
                     delta_over_bound=bool(res.delta > safe))
        report.iteration(t=t, mode="accelerated", phase=phase, mu_hat=res.mu_after, mu_prev=res.mu_before,
                         centrality=res.centrality_after, delta=res.delta, energy=desc.energy, energy_mu=mh,
                         energy_primal=e_primal, sum_nu=float(sol.nu[:n_base].sum()), m_hat=m_hat,
                         arc_copies=copies, retries=res.retries)
        desc = nxt
        t += 1
    mu_end = mu_hat(sol)
    truncated = mu_end > target
    if not truncated:
        aud.check("phase-progress", mu_end, target * (1 + 1e-12), t)
    report.event("phase", phase=phase, mu_start=mu0, mu_end=mu_end, lambda_hat=params.lambda_hat,
                 progress_steps=progress, boosts=boosts, truncated=truncated, T_s=params.T_s)
    return PhaseStats(mu0, mu_end, progress, boosts, truncated, t - step0)


def accelerated_solve(mc: MinCostInstance, params: SmoothnessParams | None = None,
                      cparams: CenteringParams | None = None, report: RunReport | None = None,
                      precondition: bool = True, solver_method: str = "cholesky", eps: float = 1e-10,
                      precond_params=None) -> tuple[PrimalDualSolution, StretchLedger]:
    """Run improvement phases from the initial point until ``mu_hat <= 1/(8 m_hat)``.

    With ``precondition`` each phase runs on the graph extended by auxiliary
    arcs through an extra vertex, and the result is fixed back onto the hub
    graph afterwards. Returns the final solution and its stretch ledger.
    """
    from .precond import PrecondParams, PreconditionedGraph, augment, fix_solution, phase_hooks

    cparams = cparams or CenteringParams()
    sol = initial_solution(mc)
    m_hat = sol.m_hat
    params = params or SmoothnessParams(m_hat)
    if params.m_hat != m_hat:
        raise ValueError("params were built for a different m_hat")
    report = report if report is not None else RunReport("accelerated", params.as_dict())
    aud = report.auditor
    ledger = StretchLedger(m_hat, params.length_budget)
    thr = cparams.threshold(m_hat)
    aud.check("centrality", centrality(sol), cparams.gamma_hat * mu_hat(sol) * (1 + cparams.centrality_rtol), 0)
    budget = int(params.phase_budget_factor * params.T_hat) + 10
    if precondition:
        pp = precond_params or PrecondParams()
        pg = PreconditionedGraph.build(mc)
        solver = PotentialSolver(pg.graph, solver_method, eps)
    else:
        solver = PotentialSolver(sol.graph, solver_method, eps)
    phase = 0
    t = 0
    ev0 = len(report.events)
    while mu_hat(sol) > thr:
        if phase >= budget:
            raise InvariantFault("phase-budget", f"{phase} phases without reaching mu_hat <= {thr:.3g}", t)
        if precondition:
            asol, state = augment(sol, pg, params, pp, aud, t)
            hooks = phase_hooks(state, params, pp, cparams, report)
            st = theta_improvement_phase(asol, solver, params, cparams, ledger, report, hooks, phase, t,
                                         stop_mu=thr, arc_copies=state.arc_copies)
            sol = fix_solution(asol, state, params, pp, cparams, report, t + st.steps_taken, st.truncated)
        else:
            st = theta_improvement_phase(sol, solver, params, cparams, ledger, report, None, phase, t, stop_mu=thr)
        t += st.steps_taken
        phase += 1
    mine = report.events[ev0:]
    boosts = sum(1 for e in mine if e["event"] == "boost")
    report.stats.update(phases=phase, progress_steps=t, boosts=boosts,
                        solves=solver.solves, final_mu_hat=mu_hat(sol), ledger_total=ledger.total,
                        ledger_max_arc=float(ledger.per_arc.max(initial=0.0)),
                        max_stretches_per_arc=int(ledger.stretches.max(initial=0)),
                        measure_added_by_boosts=ledger.measure_added,
                        delta_over_bound=sum(1 for e in mine if e["event"] == "progress" and e["delta_over_bound"]))
    return sol, ledger
