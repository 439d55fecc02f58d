"""Fixed-stress splitting for Biot poroelasticity with Signorini contact.

Each coupling iteration solves the stabilized flow problem with the
previous mechanics iterate, then the contact VI with the new pressure.  The
volumetric mean total stress ``sigma_v = lam div(u) - alpha p`` is tracked
cellwise; its iteration increments contract with factor ``(1/(lam*beta))**2``
(in squared L2 norm) when the stabilization equals ``alpha**2 / lam``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .assembly import (
    Loads,
    LoadVectors,
    MaterialParams,
    assemble_cell_divergence,
    assemble_div,
    assemble_elasticity_parts,
    assemble_loads,
    assemble_rt0_mass,
    eliminate,
)
from .contact import (
    ContactConstraints,
    ContactOptions,
    ContactSolver,
    ContactSolverError,
    build_constraints,
    kkt_residuals,
)
from .fespace import DofMaps, make_dofmaps
from .flow import FlowSystem
from .mesh import Mesh, Tag

log = logging.getLogger(__name__)


class Discretization:
    """Mesh, dof maps and every operator shared by the split and monolithic solvers."""

    def __init__(self, mesh: Mesh, params: MaterialParams, drained: Iterable[Tag] = ()):
        self.mesh = mesh
        self.params = params
        self.drained = tuple(Tag(t) for t in drained)
        self.dofmaps: DofMaps = make_dofmaps(mesh, self.drained)
        parts = assemble_elasticity_parts(mesh, self.dofmaps)
        self.strain_gram = parts.strain
        self.div_gram = parts.divergence
        self.A = (2.0 * params.G * parts.strain + params.lam * parts.divergence).tocsr()
        self.A_elim = eliminate(self.A, self.dofmaps.displacement.constrained)
        self.C = assemble_cell_divergence(mesh, self.dofmaps)
        self.B = (params.alpha * self.C.T).tocsr()
        self.Mz = assemble_rt0_mass(mesh, self.dofmaps, params.K)
        self.D = assemble_div(mesh, self.dofmaps)
        self.areas = mesh.areas

    def with_params(self, params: MaterialParams) -> "Discretization":
        return Discretization(self.mesh, params, self.drained)

    @property
    def n_u(self) -> int:
        return self.dofmaps.displacement.n_dofs

    @property
    def n_p(self) -> int:
        return self.dofmaps.pressure.n_dofs

    @property
    def n_z(self) -> int:
        return self.dofmaps.flux.n_dofs

    def loads_at(self, loads: Loads, t: float) -> LoadVectors:
        return assemble_loads(self.mesh, self.dofmaps, loads, self.params, t)

    def constraints(self, loads: Loads, t: float = 0.0) -> ContactConstraints:
        return build_constraints(self.mesh, self.dofmaps, loads, t)

    def mechanics_rhs(self, F: np.ndarray, p: np.ndarray) -> np.ndarray:
        rhs = F + self.B @ p
        rhs[self.dofmaps.displacement.constrained] = 0.0
        return rhs

    def divergence(self, u: np.ndarray) -> np.ndarray:
        return (self.C @ u) / self.areas

    def l2_cell(self, v: np.ndarray) -> float:
        return math.sqrt(float(np.dot(self.areas, v * v)))

    def flow_system(self, dt: float, stabilization: Optional[float] = None) -> FlowSystem:
        return FlowSystem(self.mesh, self.dofmaps, self.params, dt, stabilization,
                          Mz=self.Mz, D=self.D, C=self.C)


@dataclass
class State:
    u: np.ndarray
    p: np.ndarray
    z: np.ndarray
    sigma_v: np.ndarray
    k: int = 0
    t: float = 0.0
    active: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None

    def copy(self) -> "State":
        return State(
            self.u.copy(), self.p.copy(), self.z.copy(), self.sigma_v.copy(), self.k, self.t,
            None if self.active is None else self.active.copy(),
            None if self.multipliers is None else self.multipliers.copy(),
        )


def initial_state(disc: Discretization, u0=None, p0=None, z0=None, t0: float = 0.0) -> State:
    """Initial level; ``sigma_v`` is set to ``lam div(u0) - alpha p0`` cellwise."""
    u = np.zeros(disc.n_u) if u0 is None else np.asarray(u0, dtype=float).copy()
    p = np.zeros(disc.n_p) if p0 is None else np.asarray(p0, dtype=float).copy()
    z = np.zeros(disc.n_z) if z0 is None else np.asarray(z0, dtype=float).copy()
    sigma = disc.params.lam * disc.divergence(u) - disc.params.alpha * p
    return State(u, p, z, sigma, 0, t0)


def beta(params: MaterialParams) -> float:
    """``1/(M alpha^2) + c_f phi0 / alpha^2 + 1/lam``."""
    a = params.alpha
    if a <= 0:
        raise ValueError("beta is undefined for alpha = 0")
    return 1.0 / (params.M * a * a) + params.c_f * params.phi0 / (a * a) + 1.0 / params.lam


def contraction_bound(params: MaterialParams) -> float:
    """Guaranteed per-iteration reduction factor of ``||delta sigma_v||^2``."""
    return (1.0 / (params.lam * beta(params))) ** 2


def update_sigma_v(disc: Discretization, u: np.ndarray, p: np.ndarray, prev: State) -> np.ndarray:
    """Volumetric mean total stress of an iterate, incremented from the previous time level."""
    par = disc.params
    return prev.sigma_v + par.lam * disc.divergence(u - prev.u) - par.alpha * (p - prev.p)


@dataclass
class IterationRecord:
    k: int
    n: int
    norm_dsigma: float
    norm_adp: float
    norm_dz: float  # ||K^{-1/2} delta z||
    norm_eps_du: float
    norm_div_du: float
    ratio: float  # ||dsigma^n||^2 / ||dsigma^{n-1}||^2, nan when undefined
    bound: float
    active_set_size: int
    composite_lhs: float = math.nan
    composite_rhs: float = math.nan
    mass_residual: float = 0.0  # max per-cell flow residual, relative to its scale
    as_iterations: int = 0

    def contraction_holds(self, slack: float = 1e-8) -> bool:
        if math.isnan(self.composite_rhs):
            return True
        return self.composite_lhs <= (1.0 + slack) * self.composite_rhs


CSV_COLUMNS = (
    "k", "n", "norm_dsigma", "norm_adp", "norm_dz", "norm_eps_du",
    "norm_div_du", "ratio", "bound", "active_set_size",
)


@dataclass
class IterationReport:
    k: int
    records: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    kkt: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records if not math.isnan(r.ratio)])

    def worst_ratio(self) -> float:
        r = self.ratios()
        return float(r.max()) if len(r) else math.nan


class FixedStressError(RuntimeError):
    def __init__(self, message: str, report: Optional[IterationReport] = None):
        super().__init__(message)
        self.report = report


class FixedStressSolver:
    """Coupling loop for one time-step size; operators are factorized once.

    ``tol`` is relative: iteration stops when
    ``||delta sigma_v|| <= tol * max(||sigma_v^{k-1}||, floor)``.
    """

    def __init__(
        self,
        disc: Discretization,
        loads: Loads,
        dt: float,
        tol: float = 1e-10,
        max_iters: int = 200,
        floor: float = 1.0,
        stabilization: Optional[float] = None,
        contact_opts: Optional[ContactOptions] = None,
    ):
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.disc, self.loads, self.dt = disc, loads, float(dt)
        self.tol, self.max_iters, self.floor = tol, int(max_iters), floor
        self.flow = disc.flow_system(dt, stabilization)
        self.constraints = disc.constraints(loads, 0.0)
        self.mech = ContactSolver(disc.A_elim, self.constraints.N, contact_opts)
        par = disc.params
        self.decoupled = par.alpha == 0.0
        if self.decoupled:
            self.beta = math.nan
            self.bound = math.nan
        else:
            self.beta = beta(par)
            self.bound = contraction_bound(par)

    def data_at(self, t: float):
        vec = self.disc.loads_at(self.loads, t)
        gaps = self.disc.constraints(self.loads, t).gaps
        return vec, gaps

    def coupled_iterate(
        self,
        prev: State,
        current: State,
        n: int,
        prev_dsigma: float = math.nan,
        data=None,
    ) -> tuple[State, IterationRecord, object]:
        """One flow solve followed by one contact solve; returns the next iterate and its report row."""
        disc, par = self.disc, self.disc.params
        t = prev.t + self.dt
        vec, gaps = self.data_at(t) if data is None else data
        p_new, z_new = self.flow.step(prev.p, prev.u, current.p, current.u, vec.Qv, vec.Gz)
        res = self.flow.mass_residual(p_new, z_new, prev.p, prev.u, current.p, current.u, vec.Qv)
        rhs = disc.mechanics_rhs(vec.F, p_new)
        try:
            sol = self.mech.solve(rhs, gaps, initial_active=current.active)
        except ContactSolverError as exc:
            raise ContactSolverError(
                f"time step {prev.k + 1}, coupling iteration {n}: {exc}", exc.last_iterate, exc.history
            ) from exc
        u_new = sol.u
        sigma = update_sigma_v(disc, u_new, p_new, prev)
        nxt = State(u_new, p_new, z_new, sigma, prev.k + 1, t, sol.active, sol.multipliers)

        du, dp, dz = u_new - current.u, p_new - current.p, z_new - current.z
        div_du = disc.divergence(du)
        dsig = par.lam * div_du - par.alpha * dp
        n_sig = disc.l2_cell(dsig)
        n_adp = disc.l2_cell(par.alpha * dp)
        n_dz = math.sqrt(max(float(dz @ (disc.Mz @ dz)), 0.0))
        n_eps = math.sqrt(max(float(du @ (disc.strain_gram @ du)), 0.0))
        n_div = disc.l2_cell(div_du)
        ratio = math.nan
        lhs = rhs_b = math.nan
        if n >= 2 and prev_dsigma > 0:
            ratio = n_sig**2 / prev_dsigma**2
            if not self.decoupled:
                lhs = (
                    n_sig**2
                    + 2.0 * self.dt / (par.mu_f * self.beta) * n_dz**2
                    + 4.0 * par.G * par.lam * n_eps**2
                    + par.lam**2 * n_div**2
                )
                rhs_b = self.bound * prev_dsigma**2
        scale = np.abs(self.flow.pressure_rhs(prev.p, prev.u, current.p, current.u, vec.Qv)).max() / self.dt
        scale = max(scale, np.abs(self.flow.areas * self.flow.coefficient * p_new).max() / self.dt, 1e-300)
        rec = IterationRecord(
            k=prev.k + 1, n=n, norm_dsigma=n_sig, norm_adp=n_adp, norm_dz=n_dz,
            norm_eps_du=n_eps, norm_div_du=n_div, ratio=ratio, bound=self.bound,
            active_set_size=int(sol.active.sum()), composite_lhs=lhs, composite_rhs=rhs_b,
            mass_residual=float(np.abs(res).max(initial=0.0) / scale), as_iterations=sol.iterations,
        )
        return nxt, rec, sol

    def solve_time_step(self, prev: State, tol: Optional[float] = None, max_iters: Optional[int] = None):
        """Iterate to convergence; returns ``(State, IterationReport)``."""
        tol = self.tol if tol is None else tol
        max_iters = self.max_iters if max_iters is None else max_iters
        data = self.data_at(prev.t + self.dt)
        threshold = tol * max(self.disc.l2_cell(prev.sigma_v), self.floor)
        report = IterationReport(k=prev.k + 1)
        current = prev.copy()
        last_dsigma = math.nan
        sol = None
        for n in range(1, max_iters + 1):
            current, rec, sol = self.coupled_iterate(prev, current, n, last_dsigma, data)
            report.records.append(rec)
            last_dsigma = rec.norm_dsigma
            if not math.isfinite(rec.norm_dsigma):
                report.stop_reason = "diverged (non-finite iterate)"
                raise FixedStressError(report.stop_reason, report)
            if rec.norm_dsigma <= threshold:
                report.converged = True
                report.stop_reason = f"converged: ||dsigma_v|| <= {threshold:.3e}"
                break
        else:
            report.stop_reason = f"max_iters={max_iters} reached"
            log.warning("time step %d: %s (stab_L=%g, admissible > %g)", prev.k + 1,
                        report.stop_reason, self.flow.L, self.disc.params.alpha**2 / (2 * self.disc.params.lam))
            raise FixedStressError(
                f"fixed-stress iteration did not converge in {max_iters} iterations at step {prev.k + 1}; "
                f"stabilization {self.flow.L:g} vs. admissible range > alpha^2/(2 lam) = "
                f"{self.disc.params.alpha**2 / (2 * self.disc.params.lam):g}",
                report,
            )
        vec, gaps = data
        rhs = self.disc.mechanics_rhs(vec.F, current.p)
        report.kkt = kkt_residuals(sol, self.disc.A_elim, rhs, self.constraints.with_gaps(gaps))
        return current, report


def coupled_iterate(solver: FixedStressSolver, prev: State, current: State, n: int = 1, prev_dsigma=math.nan):
    nxt, rec, _ = solver.coupled_iterate(prev, current, n, prev_dsigma)
    return nxt, rec


def solve_time_step(
    disc: Discretization, prev: State, loads: Loads, dt: float, tol: float = 1e-10, max_iters: int = 200, **kw
):
    return FixedStressSolver(disc, loads, dt, tol, max_iters, **kw).solve_time_step(prev)


@dataclass
class SimulationResult:
    states: list
    reports: list
    error: Optional[str] = None


class SimulationError(RuntimeError):
    def __init__(self, message: str, result: SimulationResult):
        super().__init__(message)
        self.result = result


def run_simulation(
    disc: Discretization,
    loads: Loads,
    dt: float,
    T: float,
    initial: Optional[State] = None,
    tol: float = 1e-10,
    max_iters: int = 200,
    stabilization: Optional[float] = None,
    contact_opts: Optional[ContactOptions] = None,
    callback=None,
    floor: float = 1.0,
) -> SimulationResult:
    """Backward-Euler march over ``[0, T]``; ``states[0]`` is the initial level."""
    if not dt > 0 or not T >= dt * (1 - 1e-12):
        raise ValueError("need dt > 0 and T >= dt")
    n_steps = max(1, int(round(T / dt)))
    solver = FixedStressSolver(disc, loads, dt, tol, max_iters, floor=floor, stabilization=stabilization,
                               contact_opts=contact_opts)
    state = initial_state(disc) if initial is None else initial
    result = SimulationResult([state], [])
    for _ in range(n_steps):
        try:
            state, report = solver.solve_time_step(state)
        except (FixedStressError, ContactSolverError) as exc:
            if isinstance(exc, FixedStressError) and exc.report is not None:
                result.reports.append(exc.report)
            result.error = str(exc)
            raise SimulationError(str(exc), result) from exc
        result.states.append(state)
        result.reports.append(report)
        if callback is not None:
            callback(state, report)
    return result


__all__ = [
    "Discretization", "State", "IterationRecord", "IterationReport", "FixedStressSolver",
    "FixedStressError", "SimulationError", "SimulationResult", "beta", "contraction_bound",
    "update_sigma_v", "coupled_iterate", "solve_time_step", "run_simulation", "initial_state",
    "CSV_COLUMNS",
]
