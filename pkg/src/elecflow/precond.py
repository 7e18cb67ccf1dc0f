"""Preconditioning with auxiliary arcs through an extra vertex.

During a phase every vertex other than the hub is joined to an extra vertex
by a bundle of parallel arcs in each direction, one bundle copy per unit of
incident measure. The bundles carry a small fixed flow and are kept near it
by stretching ("freezing") whenever a progress step moves their flow too
much. They make the electrical flow smooth on light arcs. At phase end the
bundles are cut away and the demand error this leaves at each vertex is
repaired by widening one of its two hub arcs.

A bundle of multiplicity ``a`` is stored as one arc whose flow and measure
are ``a`` times those of a single copy; its resistance is then exactly the
parallel resistance of the copies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .accel import (
    UNCLASSIFIED,
    PhaseHooks,
    SmoothnessParams,
    Violation,
    alpha_stretch,
    congestion_bands,
    is_theta_smooth,
)
from .errors import InvariantFault
from .graph import DirectedMultigraph, net_inflow
from .ipm import CenteringParams, Descent, PrimalDualSolution, StepResult, centrality, mu_hat
from .reduction import MinCostInstance
from .report import Auditor, RunReport

log = logging.getLogger(__name__)

__all__ = [
    "PrecondParams",
    "PreconditionedGraph",
    "AugmentedInstance",
    "EmbeddingDiagnostics",
    "CertificateReport",
    "augment",
    "freeze",
    "alpha_widen",
    "fix_solution",
    "smoothness_certificate",
    "phase_hooks",
]


@dataclass
class PrecondParams:
    """Preconditioner constants.

    ``fix_K`` bounds the post-fix ``mu_hat`` by ``lambda_hat (1 + K/sqrt(m_hat))``
    times the phase start; ``sigma_mult`` multiplies the bound on the demand
    error repaired by the fix. ``certificate`` is ``"on-violation"``,
    ``"always"`` or ``"never"``. ``c_aux`` left at ``None`` is chosen per
    instance by ``aux_constant`` so that bundles stay light.
    """

    c_aux: float | None = None
    c_freeze: float = 4.0
    c_kstar: float = 4096.0
    fix_K: float = 4.0
    sigma_mult: float = 4.0
    certificate: str = "on-violation"

    def __post_init__(self) -> None:
        if self.certificate not in ("on-violation", "always", "never"):
            raise ValueError(f"unknown certificate mode {self.certificate!r}")
        if self.c_freeze <= 1:
            raise ValueError("c_freeze must exceed 1")
        if self.c_aux is not None and self.c_aux <= 0:
            raise ValueError("c_aux must be positive")

    def aux_constant(self, params: SmoothnessParams) -> float:
        """``c_aux``, or the smallest value at least 1 keeping bundles light all phase.

        A bundle copy carries at most ``c_freeze f_aux`` and ``mu_hat`` stays
        above ``(1 - delta) lambda_hat`` times the phase start, so twice that
        ratio against the heavy threshold leaves a factor 2 of room.
        """
        if self.c_aux is not None:
            return self.c_aux
        floor = self.c_freeze * params.c_heavy * params.c_delta / (
            params.lambda_hat * (1 - params.delta) * params.T_hat)
        return max(1.0, 2 * floor)


@dataclass(frozen=True, eq=False)
class PreconditionedGraph:
    """Hub graph plus an extra vertex ``vbar`` and one bundle each way per vertex.

    Bundle ids start at ``m_base``: ``out_arc[v]`` is ``v -> vbar`` and
    ``in_arc[v]`` is ``vbar -> v`` (``-1`` at the hub). The topology never
    changes, so one Laplacian pattern serves every phase.
    """

    base: MinCostInstance
    graph: DirectedMultigraph
    vbar: int
    m_base: int
    aux_vertex: np.ndarray
    out_arc: np.ndarray
    in_arc: np.ndarray

    @classmethod
    def build(cls, mc: MinCostInstance) -> "PreconditionedGraph":
        g = mc.graph
        n, m = g.n, g.m
        vbar = n
        vs = np.array([v for v in range(n) if v != mc.vstar], dtype=np.int64)
        k = vs.size
        tail = np.concatenate([g.tail, np.empty(2 * k, dtype=np.int64)])
        head = np.concatenate([g.head, np.empty(2 * k, dtype=np.int64)])
        tail[m::2], head[m::2] = vs, vbar
        tail[m + 1::2], head[m + 1::2] = vbar, vs
        out_arc = np.full(n, -1, dtype=np.int64)
        in_arc = np.full(n, -1, dtype=np.int64)
        out_arc[vs] = m + 2 * np.arange(k)
        in_arc[vs] = m + 2 * np.arange(k) + 1
        return cls(mc, DirectedMultigraph(n + 1, tail, head), vbar, m, np.repeat(vs, 2), out_arc, in_arc)

    @property
    def aux(self) -> np.ndarray:
        return np.arange(self.m_base, self.graph.m)


@dataclass
class AugmentedInstance:
    """Per-phase state of an augmented solution."""

    pg: PreconditionedGraph
    mult: np.ndarray  # bundle multiplicity per auxiliary arc
    f_aux: float
    mu0: float
    arc_copies: float
    measure_frozen: float = 0.0
    freezes: int = 0
    band_min: float = math.inf
    band_max: float = 0.0
    light_violations: int = 0
    certificates: list = field(default_factory=list)

    @property
    def a_vertex(self) -> np.ndarray:
        """Multiplicity ``a_v`` per vertex of the augmented graph (zero at hub and ``vbar``)."""
        a = np.zeros(self.pg.graph.n)
        a[self.pg.aux_vertex[::2]] = self.mult[::2]
        return a


def augment(sol: PrimalDualSolution, pg: PreconditionedGraph, params: SmoothnessParams, pp: PrecondParams,
            auditor: Auditor, step: int | None = None) -> tuple[PrimalDualSolution, AugmentedInstance]:
    """Extend a hub-graph solution with bundles at flow ``f_aux`` per copy.

    Every bundle gets ``f * s / nu = mu_hat``, so ``mu_hat`` and centrality
    are unchanged and the extra vertex is balanced.
    """
    g = sol.graph
    mu0 = mu_hat(sol)
    a = np.bincount(g.tail, weights=sol.nu, minlength=g.n) + np.bincount(g.head, weights=sol.nu, minlength=g.n)
    f_aux = params.c_delta * mu0 * params.m_hat ** (0.5 - 3 * params.eta) / (pp.aux_constant(params) * params.T_hat)
    av = pg.aux_vertex
    mult = a[av]
    s_aux = np.full(av.size, mu0 / f_aux)
    y = np.append(sol.y, 0.0)
    aux_len = s_aux + y[pg.graph.head[pg.m_base:]] - y[pg.graph.tail[pg.m_base:]]
    asol = PrimalDualSolution(
        pg.graph,
        np.append(sol.sigma, 0.0),
        np.concatenate([sol.f, mult * f_aux]),
        np.concatenate([sol.s, s_aux]),
        np.concatenate([sol.nu, mult]),
        np.concatenate([sol.lengths, aux_len]),
        y,
    )
    auditor.check("augment-mu", abs(mu_hat(asol) - mu0), 1e-12 * mu0, step)
    c0, c1 = centrality(sol), centrality(asol)
    auditor.check("augment-centrality", c1, c0 * (1 + 1e-9) + 1e-12 * mu0, step)
    state = AugmentedInstance(pg, mult, f_aux, mu0, float(pg.m_base + mult.sum()))
    return asol, state


def alpha_widen(sol: PrimalDualSolution, arcs, alpha, gamma: float, auditor: Auditor,
                step: int | None = None) -> float:
    """Grow the flow of ``arcs`` by ``1 + alpha`` and the measure by ``1 + beta``.

    Returns the measure added. ``mu_hat`` is unchanged.
    """
    arcs = np.asarray(arcs, dtype=np.int64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), arcs.shape)
    if np.any(alpha < 0):
        raise ValueError("alpha must be nonnegative")
    mu = mu_hat(sol)
    beta = alpha * sol.f[arcs] * sol.s[arcs] / (sol.nu[arcs] * mu)
    amax = float(np.max(alpha, initial=0.0))
    auditor.check("widen-beta-lower", float(np.max((1 - gamma) * alpha - beta, initial=0.0)), 1e-9 * amax, step)
    auditor.check("widen-beta-upper", float(np.max(beta - (1 + gamma) * alpha, initial=0.0)), 1e-9 * amax, step)
    added = float(np.sum(beta * sol.nu[arcs]))
    sol.f[arcs] *= 1 + alpha
    sol.nu[arcs] *= 1 + beta
    return added


def freeze(sol: PrimalDualSolution, kappa_bar: np.ndarray, state: AugmentedInstance, params: SmoothnessParams,
           pp: PrecondParams, gamma: float, auditor: Auditor, step: int | None = None) -> int:
    """Stretch every bundle whose flow moved by ``theta^2`` or more; check the flow band.

    Returns the number of bundles stretched.
    """
    aux = state.pg.aux
    kb = np.abs(kappa_bar[aux])
    sel = kb >= params.theta ** 2
    n = int(sel.sum())
    if n:
        nu_before = float(sol.nu[aux[sel]].sum())
        alpha_stretch(sol, aux[sel], params.m_hat ** (2 * params.eta) * kb[sel], gamma, auditor, None, step)
        state.measure_frozen += float(sol.nu[aux[sel]].sum()) - nu_before
        state.freezes += n
    per_copy = sol.f[aux] / state.mult
    lo, hi = float(per_copy.min()), float(per_copy.max())
    state.band_min = min(state.band_min, lo / state.f_aux)
    state.band_max = max(state.band_max, hi / state.f_aux)
    auditor.check("aux-band-lower", state.f_aux / pp.c_freeze, lo * (1 + 1e-12), step)
    auditor.check("aux-band-upper", hi, pp.c_freeze * state.f_aux * (1 + 1e-12), step)
    return n


def fix_solution(asol: PrimalDualSolution, state: AugmentedInstance, params: SmoothnessParams, pp: PrecondParams,
                 cparams: CenteringParams, report: RunReport, step: int | None = None,
                 truncated: bool = False) -> PrimalDualSolution:
    """Drop the bundles and widen hub arcs until every demand is met again."""
    aud = report.auditor
    pg = state.pg
    mc = pg.base
    g = mc.graph
    m = pg.m_base
    sol = PrimalDualSolution(g, mc.sigma, asol.f[:m], asol.s[:m], asol.nu[:m], asol.lengths[:m], asol.y[:-1])
    err = mc.sigma - net_inflow(g, sol.f)
    err[mc.vstar] = 0.0
    need = np.flatnonzero(err != 0)
    into = err[need] > 0
    arcs = np.where(into, mc.hub_out[need], mc.hub_in[need])
    aud.require("fix-target-arc", bool(np.all(arcs >= 0)), step, "hub arc missing for a vertex")
    mu_before_widen = mu_hat(sol)
    alpha = np.abs(err[need]) / sol.f[arcs]
    added = alpha_widen(sol, arcs, alpha, cparams.gamma_hat, aud, step)
    mu1 = mu_hat(sol)
    resid = float(np.max(np.abs(net_inflow(g, sol.f) - mc.sigma), initial=0.0))
    aud.check("fix-feasible", resid, 1e-8 * max(1.0, float(np.abs(mc.sigma).sum())), step)
    aud.check("fix-centrality", centrality(sol), cparams.gamma_hat * mu1 * (1 + cparams.centrality_rtol), step)
    aud.check("fix-widen-mu", abs(mu1 - mu_before_widen), 1e-10 * mu1, step)
    m_hat = params.m_hat
    bound = params.lambda_hat * (1 + pp.fix_K / math.sqrt(m_hat)) * state.mu0
    if not truncated:
        aud.check("fix-mu", mu1, bound, step)
    err_l1 = float(np.abs(err).sum())
    err_bound = pp.sigma_mult * pp.c_freeze * m_hat * mu1 / (pp.aux_constant(params) * params.T_hat)
    aud.check("fix-demand-error", err_l1, err_bound, step)
    aud.check("measure-total", float(sol.nu.sum()), 4 * m_hat * (1 + 1e-12), step)
    report.event("fix", step=step, mu0=state.mu0, mu=mu1, mu_bound=bound, truncated=truncated,
                 demand_error=err_l1, demand_error_ratio=err_l1 / err_bound if err_bound > 0 else 0.0,
                 measure_added=added, measure_added_per_error=added / err_l1 if err_l1 > 0 else 0.0,
                 widened=int(need.size), freezes=state.freezes, measure_frozen=state.measure_frozen,
                 band_min=state.band_min, band_max=state.band_max, light_violations=state.light_violations)
    return sol


@dataclass
class EmbeddingDiagnostics:
    """Arc spans in the potential embedding of an electrical flow."""

    delta: np.ndarray  # |phi_head - phi_tail| per arc
    lo: np.ndarray  # lower endpoint potential per arc
    hi: np.ndarray
    grid: np.ndarray  # midpoints between consecutive distinct potentials
    F: np.ndarray  # primal flow over arcs spanning each grid point
    F_hat: np.ndarray  # electrical flow over the same arcs
    demand_above: np.ndarray  # demand of the vertices above each grid point

    @classmethod
    def of(cls, sol: PrimalDualSolution, desc: Descent) -> "EmbeddingDiagnostics":
        g = sol.graph
        phi = desc.phi
        pt, ph = phi[g.tail], phi[g.head]
        lo, hi = np.minimum(pt, ph), np.maximum(pt, ph)
        xs = np.unique(phi)
        if xs.size:
            # near-ties would put a midpoint on top of a potential
            tol = 1e-12 * max(1.0, float(np.abs(xs).max()))
            xs = xs[np.concatenate(([True], np.diff(xs) > tol))]
        grid = (xs[:-1] + xs[1:]) / 2
        k = grid.size

        def spanning(w: np.ndarray) -> np.ndarray:
            acc = np.zeros(k + 1)
            np.add.at(acc, np.searchsorted(grid, lo, "right"), w)
            np.add.at(acc, np.searchsorted(grid, hi, "left"), -w)
            return np.cumsum(acc)[:k]

        # vertices strictly above a grid point are those with rank past it
        rank = np.searchsorted(grid, phi, "left")
        below = np.cumsum(np.bincount(rank, weights=sol.sigma, minlength=k + 1))[:k]
        above = float(sol.sigma.sum()) - below
        return cls(hi - lo, lo, hi, grid, spanning(sol.f), spanning(np.abs(desc.fhat)), above)


@dataclass
class CertificateReport:
    """Outcome of the separated-sets search for one flow."""

    l_star: int
    delta_star: float
    k_star: float
    x_star: float | None
    a_T: float
    a_U: float
    separated: bool
    cut_law_ok: bool
    cut_law_slack: float
    one_way_error: float
    A_star: float
    A_hat: float
    energy: float
    energy_cap: float
    light_violation: bool
    theory_violation: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _integral_outside(grid_x: np.ndarray, values: np.ndarray, bounds: np.ndarray, lo: float, hi: float) -> float:
    """Integral of a step function outside ``[lo, hi]``.

    ``values[i]`` holds on ``(bounds[i], bounds[i+1])``.
    """
    a, b = bounds[:-1], bounds[1:]
    inside = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0, None)
    return float(np.sum(values * ((b - a) - inside)))


def smoothness_certificate(sol: PrimalDualSolution, desc: Descent, state: AugmentedInstance,
                           params: SmoothnessParams, pp: PrecondParams, violation: Violation | None,
                           mu: float | None = None) -> CertificateReport:
    """Search for separated vertex sets and check the cut law ``F >= F_hat``.

    With ``violation`` (a light-arc smoothness violation at band ``l_star``)
    the search uses that band; otherwise band 0.
    """
    mu = mu_hat(sol) if mu is None else mu
    m = params.m_hat
    eta = params.eta
    ls = violation.l_star if violation is not None else 0
    d_star = params.c_heavy * m ** (3 * eta) / (14 * 2.0 ** ls)
    k_star = 2.0 ** (2 * ls) * m ** (1 - 6 * eta) * mu * mu / (pp.c_kstar * state.f_aux ** 2)
    diag = EmbeddingDiagnostics.of(sol, desc)
    a = state.a_vertex
    phi = desc.phi
    order = np.argsort(phi)
    cum = np.cumsum(a[order])
    total_a = float(cum[-1]) if cum.size else 0.0
    x_star = None
    a_T = a_U = 0.0
    if total_a >= k_star and cum.size:
        x_star = float(phi[order[int(np.searchsorted(cum, k_star - 1e-12 * max(k_star, 1.0)))]])
        up = float(a[phi >= x_star + d_star].sum())
        if up >= k_star:
            a_T = float(a[phi <= x_star].sum())
            a_U = up
        else:
            a_T = float(a[(phi >= x_star) & (phi <= x_star + d_star)].sum())
            a_U = float(a[(phi <= x_star - d_star) | (phi >= x_star + 2 * d_star)].sum())
    separated = x_star is not None and min(a_T, a_U) >= k_star
    slack = diag.F - diag.F_hat
    scale = max(1.0, float(np.abs(sol.sigma).sum()))
    cut_ok = bool(np.all(slack >= -1e-9 * scale))
    one_way = float(np.max(np.abs(diag.F_hat - diag.demand_above), initial=0.0))
    xs = np.unique(phi)
    if x_star is not None and xs.size > 1:
        A_star = _integral_outside(diag.grid, diag.F, xs, x_star - d_star, x_star + 2 * d_star)
        A_hat = _integral_outside(diag.grid, diag.F_hat, xs, x_star - d_star, x_star + 2 * d_star)
    else:
        A_star = A_hat = float("nan")
    cap = params.c_E * m * mu
    light = violation is not None
    return CertificateReport(ls, d_star, k_star, x_star, a_T, a_U, separated, cut_ok,
                             float(slack.min(initial=0.0)), one_way, A_star, A_hat, desc.energy, cap,
                             light, bool(light and desc.energy <= cap))


def phase_hooks(state: AugmentedInstance, params: SmoothnessParams, pp: PrecondParams,
                cparams: CenteringParams, report: RunReport) -> PhaseHooks:
    """Freezing after each progress step and the light-arc watchdog before each decision."""
    aud = report.auditor
    gamma = cparams.gamma_hat

    def after_progress(sol: PrimalDualSolution, res: StepResult, step: int) -> None:
        n = freeze(sol, res.kappa_bar, state, params, pp, gamma, aud, step)
        if n:
            report.event("freeze", step=step, arcs=n, measure_frozen=state.measure_frozen)

    def watchdog(sol: PrimalDualSolution, desc: Descent, heavy: np.ndarray, mu: float, step: int) -> None:
        band = congestion_bands(desc.rho, params.m_hat, params.l_max)
        light = ~heavy
        cls = {int(lv): np.flatnonzero((band == lv) & light) for lv in np.unique(band[band != UNCLASSIFIED])}
        viol = is_theta_smooth(cls, sol.nu, params.theta)
        if viol is not None:
            state.light_violations += 1
        if pp.certificate == "always" or (viol is not None and pp.certificate == "on-violation"):
            cert = smoothness_certificate(sol, desc, state, params, pp, viol, mu)
            state.certificates.append(cert)
            report.event("certificate", step=step, **cert.as_dict())
            aud.require("cut-law", cert.cut_law_ok, step, f"F < F_hat by {-cert.cut_law_slack:.3e}")
            if cert.separated:
                aud.require("separated-energy", desc.energy > cert.energy_cap, step,
                            "separated sets without the implied energy")
        aud.require("light-smoothness", viol is None, step,
                    "" if viol is None else f"light arcs break band {viol.l_star}: measure {viol.measure:.3g} > {viol.allowance:.3g}")

    return PhaseHooks(after_progress=after_progress, watchdog=watchdog)
