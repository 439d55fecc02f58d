"""Stabilized mixed flow step of the fixed-stress iteration (backward Euler in time).

All pressure equations are multiplied through by ``dt``: for every cell T

    |T| (s0 + L) (p - p_old) + (dt/mu_f) (D z)_T
        = |T| L (p_it - p_old) - alpha (C (u_it - u_old))_T + dt Q_T

and for every free edge ``Mz z - D' p = Gz``.  Here ``s0 = 1/M + c_f phi0``,
``L`` is the stabilization coefficient and ``C`` integrates the divergence of
displacements cellwise.  ``z`` is the viscosity-scaled flux ``-K (grad p - rho g grad eta)``.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    MaterialParams,
    assemble_cell_divergence,
    assemble_div,
    assemble_rt0_mass,
    eliminate,
)
from .fespace import DofMaps
from .mesh import Mesh


class FlowSolveError(RuntimeError):
    pass


class FlowSystem:
    """Factorized saddle system ``[[Mz, -D'], [(dt/mu_f) D, S]]`` for one time-step size."""

    def __init__(
        self,
        mesh: Mesh,
        dofmaps: DofMaps,
        params: MaterialParams,
        dt: float,
        stabilization: Optional[float] = None,
        Mz=None,
        D=None,
        C=None,
    ):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.mesh, self.dofmaps, self.params, self.dt = mesh, dofmaps, params, float(dt)
        self.L = params.stabilization if stabilization is None else float(stabilization)
        self.Mz = assemble_rt0_mass(mesh, dofmaps, params.K) if Mz is None else Mz
        self.D = assemble_div(mesh, dofmaps) if D is None else D
        self.C = assemble_cell_divergence(mesh, dofmaps) if C is None else C
        self.areas = mesh.areas
        self.coefficient = params.storage + self.L
        if not self.coefficient > 0:
            raise FlowSolveError("total storage coefficient must be positive")
        self.S = sp.diags(self.areas * self.coefficient)

        closed = dofmaps.flux.constrained
        keep = np.ones(dofmaps.flux.n_dofs)
        keep[closed] = 0.0
        self._keep = keep
        De = (self.D @ sp.diags(keep)).tocsr()
        self.block = sp.bmat(
            [[eliminate(self.Mz, closed), -De.T], [(self.dt / params.mu_f) * De, self.S]],
            format="csc",
        )
        try:
            self._lu = spla.splu(self.block)
        except RuntimeError as exc:
            raise FlowSolveError(f"singular flow saddle system: {exc}") from exc

    @property
    def n_flux(self) -> int:
        return self.dofmaps.flux.n_dofs

    def pressure_rhs(self, p_old, u_old, p_it, u_it, Qv) -> np.ndarray:
        a = self.params.alpha
        return (
            self.areas * self.L * (p_it - p_old)
            - a * (self.C @ (u_it - u_old))
            + self.dt * Qv
            + self.areas * self.coefficient * p_old
        )

    def step(self, p_old, u_old, p_it, u_it, Qv, Gz) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([Gz * self._keep, self.pressure_rhs(p_old, u_old, p_it, u_it, Qv)])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise FlowSolveError("flow solve produced non-finite values")
        return sol[self.n_flux:], sol[: self.n_flux]

    def mass_residual(self, p_new, z_new, p_old, u_old, p_it, u_it, Qv) -> np.ndarray:
        """Per-cell mass-balance residual in rate units (divided by ``dt``)."""
        lhs = self.areas * self.coefficient * p_new + (self.dt / self.params.mu_f) * (self.D @ z_new)
        return (lhs - self.pressure_rhs(p_old, u_old, p_it, u_it, Qv)) / self.dt

    def darcy_residual(self, p_new, z_new, Gz) -> np.ndarray:
        r = self.Mz @ z_new - self.D.T @ p_new - Gz
        return r * self._keep


def flow_step(system: FlowSystem, p_old, u_old, p_it, u_it, Qv, Gz):
    """Solve one stabilized flow step; returns ``(p_new, z_new)``."""
    return system.step(p_old, u_old, p_it, u_it, Qv, Gz)


def check_local_mass_balance(system: FlowSystem, p_new, z_new, p_old, u_old, p_it, u_it, Qv) -> np.ndarray:
    return system.mass_residual(p_new, z_new, p_old, u_old, p_it, u_it, Qv)
