"""Reference solutions: monolithic coupled step and brute-force active-set enumeration.

These are correctness oracles, not production solvers.  The monolithic
step solves the unregularized flow equations and the contact VI
simultaneously, which is the limit the fixed-stress iteration must reach.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .assembly import Loads, assemble_p1_gradient_gram, assemble_p1_mass, assemble_rt0_mass, eliminate
from .contact import ContactConstraints, ContactOptions, ContactSolver, ContactSolution
from .fixed_stress import Discretization, State, update_sigma_v


class EnumerationError(RuntimeError):
    pass


def monolithic_system(disc: Discretization, dt: float) -> sp.csc_matrix:
    """Symmetric indefinite block matrix for unknowns ``(u, p, z)`` (dt-scaled flow rows)."""
    par = disc.params
    keep_u = np.ones(disc.n_u)
    keep_u[disc.dofmaps.displacement.constrained] = 0.0
    keep_z = np.ones(disc.n_z)
    keep_z[disc.dofmaps.flux.constrained] = 0.0
    Ce = disc.C @ sp.diags(keep_u)
    De = disc.D @ sp.diags(keep_z)
    r = dt / par.mu_f
    S0 = sp.diags(disc.areas * par.storage)
    return sp.bmat(
        [
            [disc.A_elim, -par.alpha * Ce.T, None],
            [-par.alpha * Ce, -S0, -r * De],
            [None, -r * De.T, r * eliminate(disc.Mz, disc.dofmaps.flux.constrained)],
        ],
        format="csc",
    )


def monolithic_rhs(disc: Discretization, prev: State, loads: Loads, dt: float) -> np.ndarray:
    par = disc.params
    vec = disc.loads_at(loads, prev.t + dt)
    F = vec.F.copy()
    F[disc.dofmaps.displacement.constrained] = 0.0
    gz = vec.Gz.copy()
    gz[disc.dofmaps.flux.constrained] = 0.0
    rp = disc.areas * par.storage * prev.p + par.alpha * (disc.C @ prev.u) + dt * vec.Qv
    return np.concatenate([F, -rp, (dt / par.mu_f) * gz])


def _split(disc: Discretization, x: np.ndarray):
    nu, np_ = disc.n_u, disc.n_p
    return x[:nu], x[nu:nu + np_], x[nu + np_:]


def monolithic_step(
    disc: Discretization,
    prev: State,
    loads: Loads,
    dt: float,
    initial_active=None,
    contact_opts: Optional[ContactOptions] = None,
) -> State:
    """Fully implicit coupled step with contact, by active-set iteration on the block system."""
    K = monolithic_system(disc, dt)
    constraints = disc.constraints(loads, prev.t + dt)
    solver = ContactSolver(K, constraints.padded(K.shape[0]), contact_opts)
    sol = solver.solve(monolithic_rhs(disc, prev, loads, dt), constraints.gaps, initial_active)
    u, p, z = _split(disc, sol.u)
    return State(u, p, z, update_sigma_v(disc, u, p, prev), prev.k + 1, prev.t + dt,
                 sol.active, sol.multipliers)


def monolithic_solution(disc: Discretization, prev: State, loads: Loads, dt: float, **kw) -> ContactSolution:
    """Same as :func:`monolithic_step` but returns the raw KKT solution over ``(u, p, z)``."""
    K = monolithic_system(disc, dt)
    constraints = disc.constraints(loads, prev.t + dt)
    solver = ContactSolver(K, constraints.padded(K.shape[0]), kw.get("contact_opts"))
    return solver.solve(monolithic_rhs(disc, prev, loads, dt), constraints.gaps, kw.get("initial_active"))


@dataclass
class Enumerated:
    x: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    n_kkt_sets: int


def enumerate_active_sets(K, rhs, N, gaps, tol: float = 1e-9, max_constraints: int = 14) -> Enumerated:
    """Solve ``min 1/2 x'Kx - rhs'x s.t. N x <= g`` by trying every active set densely.

    ``K`` may be an indefinite block matrix as long as each equality-constrained
    KKT system is nonsingular.  All KKT-feasible sets must give the same ``x``.
    """
    K = np.asarray(K.todense() if sp.issparse(K) else K, dtype=float)
    N = np.asarray(N.todense() if sp.issparse(N) else N, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    n, m = K.shape[0], N.shape[0]
    if m > max_constraints:
        raise EnumerationError(f"{m} constraints is too many for exhaustive enumeration")
    x_scale = max(np.abs(np.linalg.solve(K, rhs)).max(), np.abs(gaps).max(initial=0.0), 1e-300)
    f_scale = max(np.abs(rhs).max(), 1e-300)
    found = []
    for r in range(m + 1):
        for subset in itertools.combinations(range(m), r):
            idx = list(subset)
            Na = N[idx]
            kkt = np.block([[K, Na.T], [Na, np.zeros((r, r))]])
            try:
                sol = np.linalg.solve(kkt, np.concatenate([rhs, gaps[idx]]))
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            lam = np.zeros(m)
            lam[idx] = sol[n:]
            if np.all(N @ x - gaps <= tol * x_scale) and np.all(lam >= -tol * f_scale):
                active = np.zeros(m, dtype=bool)
                active[idx] = True
                found.append(Enumerated(x, lam, active, 0))
    if not found:
        raise EnumerationError("no active set satisfies the KKT conditions")
    best = found[0]
    for other in found[1:]:
        if np.abs(other.x - best.x).max() > 1e-6 * x_scale:
            raise EnumerationError("KKT solution is not unique")
    best.n_kkt_sets = len(found)
    return best


def brute_force_contact(A, rhs, constraints: ContactConstraints, tol: float = 1e-9) -> Enumerated:
    return enumerate_active_sets(A, rhs, constraints.N, constraints.gaps, tol)


def brute_force_monolithic(disc: Discretization, prev: State, loads: Loads, dt: float) -> State:
    K = monolithic_system(disc, dt)
    constraints = disc.constraints(loads, prev.t + dt)
    e = enumerate_active_sets(K, monolithic_rhs(disc, prev, loads, dt), constraints.padded(K.shape[0]),
                              constraints.gaps)
    u, p, z = _split(disc, e.x)
    return State(u, p, z, update_sigma_v(disc, u, p, prev), prev.k + 1, prev.t + dt, e.active, e.multipliers)


class StateNorms:
    """Gram matrices for ``L2`` (p), ``H1`` (u) and ``H(div)`` (z) norms on one mesh."""

    def __init__(self, disc: Discretization):
        self.disc = disc
        self.h1 = (assemble_p1_mass(disc.mesh, disc.dofmaps) + assemble_p1_gradient_gram(disc.mesh, disc.dofmaps)).tocsr()
        self.rt_mass = assemble_rt0_mass(disc.mesh, disc.dofmaps, np.eye(2))

    def p_l2(self, p) -> float:
        return self.disc.l2_cell(p)

    def u_h1(self, u) -> float:
        return math.sqrt(max(float(u @ (self.h1 @ u)), 0.0))

    def z_hdiv(self, z) -> float:
        div = (self.disc.D @ z) / self.disc.areas
        return math.sqrt(max(float(z @ (self.rt_mass @ z)), 0.0) + self.disc.l2_cell(div) ** 2)


def compare_states(a: State, b: State, disc: Discretization, norms: Optional[StateNorms] = None,
                   floor: float = 1e-12) -> dict:
    """Discrepancies ``||a - b|| / max(||b||, floor)`` per field, plus the absolute values."""
    for name in ("u", "p", "z"):
        if getattr(a, name).shape != getattr(b, name).shape:
            raise ValueError(f"field '{name}' has mismatched sizes")
    norms = norms or StateNorms(disc)
    out = {}
    for key, name, f in (("p_L2", "p", norms.p_l2), ("u_H1", "u", norms.u_h1), ("z_Hdiv", "z", norms.z_hdiv)):
        diff = f(getattr(a, name) - getattr(b, name))
        ref = f(getattr(b, name))
        out[key] = diff / max(ref, floor)
        out[key + "_abs"] = diff
    return out
