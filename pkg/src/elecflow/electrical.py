"""Weighted Laplacians, electrical flows, potentials and energy.

Potentials solve ``L phi = sigma`` with ``L = B R^-1 B^T``; the induced flow is
``f_e = (phi_head - phi_tail) / r_e`` and its energy is ``sigma . phi``.

Two solvers share one interface:

* ``"cholesky"`` (default): exact sparse Cholesky of the Laplacian with the
  lowest-id vertex of every component grounded. The ordering and symbolic
  analysis are computed once per sparsity pattern (``LaplacianPattern``) and
  only the numeric factorization is redone when resistances change.
* ``"cg"``: Jacobi-preconditioned conjugate gradient stopped on an estimate of
  the energy-norm error, so ``||phi - phi*||_L <= eps ||phi*||_L``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from . import kernels
from .errors import TOL, DemandError, DimensionError, ResistanceError
from .graph import DirectedMultigraph

log = logging.getLogger(__name__)

__all__ = [
    "Resistances",
    "LaplacianPattern",
    "LaplacianSystem",
    "ElectricalSolve",
    "build_laplacian",
    "solve_potentials",
    "electrical_flow",
    "energy",
    "conductance_lower_bound",
    "energy_norm",
]

RATIO_WARN = 1e14
"""Resistance spread above which a warning metric is emitted."""


class Resistances:
    """Positive finite per-arc resistances with the max/min spread tracked."""

    __slots__ = ("values", "ratio", "ratio_exceeded")

    def __init__(self, values, ratio_limit: float = RATIO_WARN):
        r = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ResistanceError("resistances must be positive and finite")
        self.values = r
        self.ratio = float(r.max() / r.min()) if r.size else 1.0
        self.ratio_exceeded = self.ratio > ratio_limit
        if self.ratio_exceeded:
            log.warning("resistance spread %.3e exceeds %.1e", self.ratio, ratio_limit)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size


def _as_resistances(r) -> np.ndarray:
    if isinstance(r, Resistances):
        return r.values
    r = np.asarray(r, dtype=float).reshape(-1)
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise ResistanceError("resistances must be positive and finite")
    return r


class LaplacianPattern:
    """Sparsity-dependent work shared by every factorization on one graph.

    Holds the component structure, grounded vertices, a fill-reducing
    ordering and the symbolic Cholesky analysis of the grounded system.
    """

    def __init__(self, n: int, tail: np.ndarray, head: np.ndarray):
        self.n = n
        self.tail = np.asarray(tail, dtype=np.int64)
        self.head = np.asarray(head, dtype=np.int64)
        m = self.tail.size
        adj = sp.coo_matrix((np.ones(m), (self.tail, self.head)), shape=(n, n))
        ncomp, labels = csgraph.connected_components(adj, directed=False)
        self.ncomp, self.labels = ncomp, labels
        ground = np.full(ncomp, n, dtype=np.int64)
        np.minimum.at(ground, labels, np.arange(n))
        self.ground = ground
        keep = np.ones(n, dtype=bool)
        keep[ground] = False
        self.red = np.full(n, -1, dtype=np.int64)
        self.red[keep] = np.arange(int(keep.sum()))
        self.nr = nr = int(keep.sum())
        self.comp_size = np.bincount(labels, minlength=ncomp)

        rt, rh = self.red[self.tail], self.red[self.head]
        both = (rt >= 0) & (rh >= 0)
        lo = np.minimum(rt, rh)[both]
        hi = np.maximum(rt, rh)[both]
        pairs, pair_of = np.unique(lo * max(nr, 1) + hi, return_inverse=True)
        plo, phi = pairs // max(nr, 1), pairs % max(nr, 1)
        npairs = pairs.size

        # fill-reducing ordering from SuperLU's minimum degree on A + A^T
        if nr > 0:
            pat = sp.coo_matrix(
                (np.ones(2 * npairs), (np.r_[plo, phi], np.r_[phi, plo])), shape=(nr, nr)
            ).tocsc()
            pat = (pat + sp.identity(nr, format="csc") * (pat.sum(axis=0).max() + 1.0)).tocsc()
            lu = spla.splu(pat, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
            pos = np.asarray(lu.perm_c, dtype=np.int64)
        else:
            pos = np.zeros(0, dtype=np.int64)
        self.pos = pos  # reduced index -> factor index
        self.order = np.argsort(pos)  # factor index -> reduced index

        # upper-triangular CSC of the permuted grounded Laplacian
        prow = np.r_[pos, np.minimum(pos[plo], pos[phi])]
        pcol = np.r_[pos, np.maximum(pos[plo], pos[phi])]
        ident = np.arange(1, nr + npairs + 1, dtype=float)
        C = sp.csc_matrix((ident, (prow, pcol)), shape=(nr, nr))
        C.sort_indices()
        self.Cp = C.indptr.astype(np.int64)
        self.Ci = C.indices.astype(np.int64)
        slot_of_entry = np.empty(nr + npairs, dtype=np.int64)
        slot_of_entry[C.data.astype(np.int64) - 1] = np.arange(C.nnz)
        self.nnz = C.nnz

        # scatter plan: conductance of arc e lands on two diagonals and one pair
        arcs = np.arange(m)
        idx, src, sgn = [], [], []
        for endpoint in (rt, rh):
            ok = endpoint >= 0
            idx.append(slot_of_entry[endpoint[ok]])
            src.append(arcs[ok])
            sgn.append(np.ones(int(ok.sum())))
        idx.append(slot_of_entry[nr + pair_of])
        src.append(arcs[both])
        sgn.append(-np.ones(int(both.sum())))
        self.scatter_idx = np.concatenate(idx)
        self.scatter_src = np.concatenate(src)
        self.scatter_sgn = np.concatenate(sgn)

        if kernels.BACKEND == "cython" and nr > 0:
            self.parent = kernels.etree(self.Cp, self.Ci, nr)
            self.Lp = kernels.symbolic(self.Cp, self.Ci, self.parent, nr)
        else:
            self.parent = None
            self.Lp = None

    @classmethod
    def of(cls, g: DirectedMultigraph) -> "LaplacianPattern":
        if "pattern" not in g._cache:
            g._cache["pattern"] = cls(g.n, g.tail, g.head)
        return g._cache["pattern"]

    def assemble(self, conductance: np.ndarray) -> np.ndarray:
        """Values of the permuted grounded upper triangle."""
        w = conductance[self.scatter_src] * self.scatter_sgn
        return np.bincount(self.scatter_idx, weights=w, minlength=self.nnz)

    def upper(self, conductance: np.ndarray) -> sp.csc_matrix:
        return sp.csc_matrix((self.assemble(conductance), self.Ci, self.Cp), shape=(self.nr, self.nr))

    def reduced_matrix(self, conductance: np.ndarray) -> sp.csc_matrix:
        """Full symmetric permuted grounded Laplacian."""
        U = self.upper(conductance)
        return (U + sp.triu(U, k=1).T).tocsc()

    def check_demand(self, sigma: np.ndarray, tol: float = TOL) -> None:
        sums = np.bincount(self.labels, weights=sigma, minlength=self.ncomp)
        scale = max(1.0, float(np.abs(sigma).sum()))
        if np.any(np.abs(sums) > tol * scale):
            bad = int(np.argmax(np.abs(sums)))
            raise DemandError(
                f"demand sums to {sums[bad]:.3e} on a connected component; no flow can route it"
            )

    def to_factor_order(self, sigma: np.ndarray) -> np.ndarray:
        b = np.empty(self.nr)
        mask = self.red >= 0
        b[self.pos[self.red[mask]]] = sigma[mask]
        return b

    def from_factor_order(self, x: np.ndarray) -> np.ndarray:
        phi = np.zeros(self.n)
        mask = self.red >= 0
        phi[mask] = x[self.pos[self.red[mask]]]
        # zero mean per component
        means = np.bincount(self.labels, weights=phi, minlength=self.ncomp) / self.comp_size
        return phi - means[self.labels]


class CholeskyFactor:
    """Numeric factorization for one conductance vector on a fixed pattern."""

    def __init__(self, pattern: LaplacianPattern, conductance: np.ndarray):
        self.pattern = pattern
        if pattern.nr == 0:
            self._lu = None
            return
        if kernels.BACKEND == "cython":
            Lp = pattern.Lp
            self.Li = np.empty(Lp[-1], dtype=np.int64)
            self.Lx = np.empty(Lp[-1])
            Cx = pattern.assemble(conductance)
            status = kernels.numeric(pattern.Cp, pattern.Ci, Cx, pattern.parent, Lp, self.Li, self.Lx)
            if status >= 0:
                raise ResistanceError(f"Laplacian factorization broke down at column {status}")
            self._lu = None
        else:
            A = pattern.reduced_matrix(conductance)
            self._lu = spla.splu(A, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})

    def solve(self, sigma: np.ndarray) -> np.ndarray:
        pat = self.pattern
        if pat.nr == 0:
            return np.zeros(pat.n)
        b = pat.to_factor_order(sigma)
        if self._lu is None:
            kernels.solve(pat.Lp, self.Li, self.Lx, b)
        else:
            b = self._lu.solve(b)
        return pat.from_factor_order(b)


def _pcg(A: sp.spmatrix, b: np.ndarray, eps: float, delay: int = 8, maxiter: int | None = None) -> np.ndarray:
    """Jacobi PCG stopped when the estimated relative energy-norm error is below eps.

    The error estimate sums ``alpha_j * (r_j . z_j)`` over a window of
    ``delay`` future iterations (a lower bound on the squared A-norm error at
    the start of the window that becomes tight as the window grows); a safety
    factor of ten is applied on top.
    """
    n = b.size
    maxiter = maxiter or 20 * n + 100
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    hist: list[float] = []
    xs: list[np.ndarray] = [x.copy()]
    bx = 0.0
    for _ in range(maxiter):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        hist.append(alpha * rz)
        xs.append(x)
        if len(hist) > delay:
            k = len(hist) - delay - 1
            err2 = sum(hist[k:])
            bx = b @ xs[-1]
            if err2 <= (0.1 * eps) ** 2 * max(bx, 1e-300):
                return x
            xs[k] = None  # type: ignore[call-overload]
        if not np.any(r):
            return x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


@dataclass
class LaplacianSystem:
    """Weighted Laplacian ``L = B R^-1 B^T`` of a graph."""

    graph: DirectedMultigraph
    conductance: np.ndarray
    matrix: sp.csr_matrix
    incidence: sp.csr_matrix
    pattern: LaplacianPattern
    _factor: CholeskyFactor | None = None

    def factor(self) -> CholeskyFactor:
        if self._factor is None:
            self._factor = CholeskyFactor(self.pattern, self.conductance)
        return self._factor

    def quad(self, phi: np.ndarray) -> float:
        """``phi^T L phi``."""
        d = self.incidence.T @ phi
        return float(np.sum(self.conductance * d * d))


def build_laplacian(g: DirectedMultigraph, r) -> LaplacianSystem:
    """Laplacian with diagonal ``sum 1/r_e`` and off-diagonals ``-sum 1/r_e``."""
    r = _as_resistances(r)
    if r.size != g.m:
        raise DimensionError(f"{r.size} resistances for {g.m} arcs")
    c = 1.0 / r
    B = g.incidence()
    L = (B @ sp.diags(c) @ B.T).tocsr()
    return LaplacianSystem(g, c, L, B, LaplacianPattern.of(g))


def solve_potentials(L: LaplacianSystem, sigma, eps: float = 1e-10, method: str = "cholesky") -> np.ndarray:
    """Potentials with ``||phi - phi*||_L <= eps ||phi*||_L``, zero mean per component."""
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.size != L.graph.n:
        raise DimensionError(f"demand has {sigma.size} entries for {L.graph.n} vertices")
    L.pattern.check_demand(sigma)
    if method == "cholesky":
        return L.factor().solve(sigma)
    if method == "cg":
        pat = L.pattern
        if pat.nr == 0:
            return np.zeros(pat.n)
        A = pat.reduced_matrix(L.conductance).tocsr()
        x = _pcg(A, pat.to_factor_order(sigma), eps)
        return pat.from_factor_order(x)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ElectricalSolve:
    """Electrical flow, inducing potentials, energy and demand residual."""

    flow: np.ndarray
    potentials: np.ndarray
    energy: float
    demand_residual: float


def _potential_flow(g: DirectedMultigraph, r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return (phi[g.head] - phi[g.tail]) / r


def electrical_flow(g: DirectedMultigraph, r, sigma, eps: float = 1e-10, method: str = "cholesky") -> ElectricalSolve:
    """Energy-minimising sigma-flow for resistances r, induced by potentials."""
    r = _as_resistances(r)
    L = build_laplacian(g, r)
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    phi = solve_potentials(L, sigma, eps, method)
    f = _potential_flow(g, r, phi)
    residual = sigma - (np.bincount(g.head, weights=f, minlength=g.n) - np.bincount(g.tail, weights=f, minlength=g.n))
    # energy norm of the flow that would repair the residual demand
    corr = L.factor().solve(residual - residual.mean()) if np.any(residual) else np.zeros(g.n)
    res_norm = float(np.sqrt(max(residual @ corr, 0.0)))
    return ElectricalSolve(f, phi, float(np.sum(r * f * f)), res_norm)


def energy(f, r) -> float:
    """``sum r_e f_e^2``."""
    f = np.asarray(f, dtype=float)
    r = np.asarray(r, dtype=float)
    return float(np.sum(r * f * f))


def energy_norm(L: LaplacianSystem, phi: np.ndarray) -> float:
    """``||phi||_L``."""
    return float(np.sqrt(max(L.quad(phi), 0.0)))


def conductance_lower_bound(g: DirectedMultigraph, r, sigma, phi) -> float:
    """``sum (phi_v - phi_u)^2 / r_e`` after rescaling so that ``sigma . phi = 1``.

    Upper-bounds ``1 / E_r(f*)``; tight when ``phi`` is proportional to the
    electrical potentials.
    """
    r = _as_resistances(r)
    sigma = np.asarray(sigma, dtype=float)
    phi = np.asarray(phi, dtype=float)
    scale = float(sigma @ phi)
    if abs(scale) <= TOL * max(1.0, float(np.abs(sigma).sum() * np.abs(phi).max(initial=0.0))):
        raise DemandError("sigma . phi = 0; potentials cannot be normalised")
    phi = phi / scale
    d = phi[g.head] - phi[g.tail]
    return float(np.sum(d * d / r))
