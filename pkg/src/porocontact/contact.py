"""Frictionless Signorini contact as an SPD quadratic program with nodal constraints.

The mechanics step minimizes ``1/2 u'Au - rhs'u`` subject to ``N u <= g``,
where each row of ``N`` extracts the outward normal displacement at one
contact vertex.  Multipliers are nonnegative and represent the compressive
normal traction ``-sigma_nu`` lumped at the vertex.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import lsq_linear

from .assembly import Loads
from .fespace import DofMaps
from .mesh import Mesh, Tag

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ContactConstraints:
    vertices: np.ndarray  # (m,) GAMMA3 vertices not clamped
    normals: np.ndarray  # (m, 2) unit outward normals
    gaps: np.ndarray  # (m,)
    N: sp.csr_matrix  # (m, n_disp)
    warnings: tuple[str, ...] = ()

    @property
    def m(self) -> int:
        return len(self.vertices)

    def with_gaps(self, gaps: np.ndarray) -> "ContactConstraints":
        return ContactConstraints(self.vertices, self.normals, np.asarray(gaps, float), self.N, self.warnings)

    def padded(self, n_total: int) -> sp.csr_matrix:
        """``N`` with zero columns appended, for block systems whose leading block is u."""
        N = self.N
        return sp.hstack([N, sp.csr_matrix((N.shape[0], n_total - N.shape[1]))]).tocsr()


def vertex_normals(mesh: Mesh, tag: Tag = Tag.GAMMA3) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals at vertices of ``tag`` edges, averaged over the adjacent tagged edges."""
    eids = mesh.tagged_edges(tag)
    acc = np.zeros((mesh.n_vertices, 2))
    for k in range(2):
        np.add.at(acc, mesh.edges[eids, k], mesh.edge_normals[eids])
    verts = np.unique(mesh.edges[eids])
    n = acc[verts]
    return verts, n / np.linalg.norm(n, axis=1)[:, None]


def build_constraints(mesh: Mesh, dofmaps: DofMaps, loads: Loads, t: float = 0.0) -> ContactConstraints:
    verts, normals = vertex_normals(mesh, Tag.GAMMA3)
    clamped = set(mesh.tagged_vertices(Tag.GAMMA1).tolist())
    warnings = []
    keep = []
    for k, v in enumerate(verts.tolist()):
        if v in clamped:
            warnings.append(f"vertex {v} lies on GAMMA1 and GAMMA3; Dirichlet condition wins")
        else:
            keep.append(k)
    verts, normals = verts[keep], normals[keep]
    x, y = mesh.vertices[verts, 0], mesh.vertices[verts, 1]
    gaps = np.broadcast_to(np.asarray(loads.gap(x, y, t), dtype=float), x.shape).copy()
    if np.any(gaps < 0):
        raise ValueError("gap function must be nonnegative on GAMMA3")
    m = len(verts)
    indices = np.column_stack([2 * verts, 2 * verts + 1]).ravel()
    N = sp.csr_matrix(
        (normals.ravel(), indices, np.arange(0, 2 * m + 1, 2)),
        shape=(m, dofmaps.displacement.n_dofs),
    )
    return ContactConstraints(verts, normals, gaps, N, tuple(warnings))


@dataclass
class ContactOptions:
    c: float = 1.0  # complementarity scaling relative to the diagonal of A
    max_as_iters: int = 100
    fallback: bool = True  # switch to a bounded dual solve if the active set cycles


@dataclass
class ContactSolution:
    u: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray  # boolean mask
    iterations: int = 0
    history: list = field(default_factory=list)
    method: str = "pdas"


class ContactSolverError(RuntimeError):
    def __init__(self, message: str, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history or []


class ContactSolver:
    """Primal-dual active-set solver with a cached factorization of ``A``.

    ``A`` may be any nonsingular (already constraint-eliminated) matrix whose
    constrained compliance ``N A^{-1} N'`` is SPD, which covers both the
    elasticity block and the monolithic poroelastic block system.
    """

    def __init__(self, A: sp.spmatrix, N: sp.spmatrix, opts: Optional[ContactOptions] = None):
        self.opts = opts or ContactOptions()
        self.n = A.shape[0]
        try:
            self._lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise ContactSolverError(f"singular system matrix: {exc}") from exc
        N = sp.csr_matrix(N)
        self.N = N
        self.m = N.shape[0]
        if self.m:
            self.W = self._lu.solve(np.asarray(N.T.todense()))  # A^{-1} N'
            self.S = np.asarray(N @ self.W)
            self.S = 0.5 * (self.S + self.S.T)
            diag = N.multiply(N) @ np.abs(A.diagonal())
            self.cscale = self.opts.c * np.where(diag > 0, diag, 1.0)
        else:
            self.W = np.zeros((self.n, 0))
            self.S = np.zeros((0, 0))
            self.cscale = np.zeros(0)

    def unconstrained(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def solve_active(self, u0: np.ndarray, gaps: np.ndarray, active: np.ndarray):
        """Equality-constrained solve with ``N_a u = g_a`` for the given active mask."""
        lam = np.zeros(self.m)
        idx = np.flatnonzero(active)
        if len(idx):
            r = self.N[idx] @ u0 - gaps[idx]
            try:
                lam[idx] = sla.solve(self.S[np.ix_(idx, idx)], r, assume_a="pos")
            except (sla.LinAlgError, ValueError) as exc:
                raise ContactSolverError(f"singular constrained system: {exc}") from exc
            u = u0 - self.W[:, idx] @ lam[idx]
        else:
            u = u0.copy()
        return u, lam

    def next_active(self, u: np.ndarray, lam: np.ndarray, gaps: np.ndarray) -> np.ndarray:
        return lam + self.cscale * (self.N @ u - gaps) > 0

    def _dual_active_set(self, u0: np.ndarray, gaps: np.ndarray) -> np.ndarray:
        d = self.N @ u0 - gaps
        R = sla.cholesky(self.S, lower=False)
        target = sla.solve_triangular(R, d, trans="T")
        res = lsq_linear(R, target, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
        lam = res.x
        return lam > 1e-12 * max(np.abs(lam).max(), 1e-300)

    def solve(self, rhs: np.ndarray, gaps: np.ndarray, initial_active=None) -> ContactSolution:
        u0 = self.unconstrained(rhs)
        if self.m == 0:
            return ContactSolution(u0, np.zeros(0), np.zeros(0, dtype=bool))
        gaps = np.asarray(gaps, dtype=float)
        active = (
            np.zeros(self.m, dtype=bool) if initial_active is None else np.asarray(initial_active, dtype=bool).copy()
        )
        history = [tuple(np.flatnonzero(active).tolist())]
        seen = {history[0]}
        method = "pdas"
        for it in range(1, self.opts.max_as_iters + 1):
            u, lam = self.solve_active(u0, gaps, active)
            nxt = self.next_active(u, lam, gaps)
            if np.array_equal(nxt, active):
                return ContactSolution(u, lam, active, it, history, method)
            key = tuple(np.flatnonzero(nxt).tolist())
            history.append(key)
            if key in seen and self.opts.fallback and method == "pdas":
                log.info("active set cycling after %d iterations; using bounded dual solve", it)
                nxt = self._dual_active_set(u0, gaps)
                method = "pdas+dual"
                history.append(tuple(np.flatnonzero(nxt).tolist()))
            seen.add(key)
            active = nxt
        raise ContactSolverError(
            f"active-set iteration did not converge in {self.opts.max_as_iters} iterations",
            last_iterate=(u, lam, active),
            history=history,
        )


def primal_dual_active_set_step(active, A, rhs, constraints: ContactConstraints, c: float = 1.0):
    """One active-set update from scratch (no cached factorization).

    Solves the saddle system ``[[A, N_a'], [N_a, 0]]`` for the given active
    set and returns ``(next_active, u, multipliers)``.
    """
    active = np.asarray(active, dtype=bool)
    idx = np.flatnonzero(active)
    N = constraints.N
    n, m = A.shape[0], constraints.m
    if len(idx):
        Na = N[idx]
        K = sp.bmat([[A, Na.T], [Na, None]], format="csc")
        sol = spla.spsolve(K, np.concatenate([rhs, constraints.gaps[idx]]))
    else:
        sol = spla.spsolve(sp.csc_matrix(A), np.asarray(rhs, dtype=float))
    u = sol[:n]
    lam = np.zeros(m)
    lam[idx] = sol[n:]
    diag = N.multiply(N) @ np.abs(A.diagonal())
    nxt = lam + c * diag * (N @ u - constraints.gaps) > 0
    return nxt, u, lam


def solve_contact_vi(
    A: sp.spmatrix,
    rhs: np.ndarray,
    constraints: ContactConstraints,
    opts: Optional[ContactOptions] = None,
    initial_active=None,
) -> ContactSolution:
    """Minimize ``1/2 u'Au - rhs'u`` over ``{N u <= g}`` (``A`` already eliminated)."""
    solver = ContactSolver(A, constraints.N, opts)
    return solver.solve(rhs, constraints.gaps, initial_active)


def kkt_residuals(sol: ContactSolution, A, rhs, constraints: ContactConstraints) -> dict:
    """KKT violations, raw and scaled by the problem's displacement/force magnitudes."""
    N, g = constraints.N, constraints.gaps
    u, lam = sol.u[: N.shape[1]], sol.multipliers
    slack = N @ u - g if constraints.m else np.zeros(0)
    stat = A @ sol.u - rhs
    stat[: N.shape[1]] += N.T @ lam
    u_scale = max(np.abs(u).max(initial=0.0), np.abs(g).max(initial=0.0), 1e-300)
    f_scale = max(np.abs(rhs).max(initial=0.0), np.abs(lam).max(initial=0.0), 1e-300)
    raw = {
        "feasibility": float(np.maximum(slack, 0.0).max(initial=0.0)),
        "sign": float(np.minimum(lam, 0.0).min(initial=0.0)),
        "complementarity": float(np.abs(lam * slack).max(initial=0.0)),
        "stationarity": float(np.abs(stat).max(initial=0.0)),
    }
    return {
        **raw,
        "feasibility_scaled": raw["feasibility"] / u_scale,
        "sign_scaled": raw["sign"] / f_scale,
        "complementarity_scaled": raw["complementarity"] / max(u_scale * f_scale, 1e-300),
        "stationarity_scaled": raw["stationarity"] / f_scale,
    }
