"""Global sparse matrices and load vectors for the mechanics VI and the mixed flow system."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .fespace import (
    EDGE_GAUSS2,
    TRIANGLE_DEG2,
    DofMaps,
    eval_scalar,
    local_p1_gradients,
    local_rt0_basis,
    physical_points,
)
from .mesh import Mesh, Tag


def _zero(x, y, *args):
    return np.zeros_like(np.asarray(x, dtype=float))


def _zero_vec(x, y, *args):
    z = np.zeros_like(np.asarray(x, dtype=float))
    return z, z


@dataclass(frozen=True)
class MaterialParams:
    """Physical coefficients of the Biot model (spatially constant).

    ``K`` is the 2x2 permeability tensor, ``eta`` the elevation function
    ``eta(x, y)`` entering the gravity term, and ``stab_L`` the fixed-stress
    regularization coefficient (``alpha**2 / lam`` when left as ``None``).
    """

    lam: float
    G: float
    alpha: float = 1.0
    M: float = 1.0
    c_f: float = 0.0
    phi0: float = 0.0
    mu_f: float = 1.0
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    rho_f_r: float = 0.0
    g_grav: float = 0.0
    eta: Optional[Callable] = None
    stab_L: Optional[float] = None

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.ndim == 0:
            K = K * np.eye(2)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        problems = []
        if not self.lam > 0:
            problems.append("lam must be > 0")
        if not self.G > 0:
            problems.append("G must be > 0")
        if not self.M > 0:
            problems.append("M must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            problems.append("alpha must lie in [0, 1]")
        if not self.c_f >= 0:
            problems.append("c_f must be >= 0")
        if not 0.0 <= self.phi0 < 1.0:
            problems.append("phi0 must lie in [0, 1)")
        if not self.mu_f > 0:
            problems.append("mu_f must be > 0")
        if K.shape != (2, 2) or not np.allclose(K, K.T, rtol=1e-13, atol=0.0):
            problems.append("K must be a symmetric 2x2 tensor")
        elif np.linalg.eigvalsh(K).min() <= 0:
            problems.append("K must be positive definite")
        if self.stab_L is not None and not (self.stab_L > 0 or (self.stab_L == 0 and self.alpha == 0)):
            problems.append("stab_L must be > 0")
        if problems:
            raise ValueError("invalid material parameters: " + "; ".join(problems))

    @property
    def storage(self) -> float:
        """Total compressibility ``1/M + c_f * phi0``."""
        return 1.0 / self.M + self.c_f * self.phi0

    @property
    def stabilization(self) -> float:
        if self.stab_L is None:
            return self.alpha**2 / self.lam
        return float(self.stab_L)

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)


@dataclass(frozen=True)
class Loads:
    """Data callables, all vectorized over numpy arrays.

    ``f0(x, y, t) -> (fx, fy)``, ``f2(x, y, t, nx, ny) -> (fx, fy)``,
    ``q(x, y, t)`` and ``gap(x, y, t)`` (must be >= 0 on GAMMA3).
    """

    f0: Callable = _zero_vec
    f2: Callable = _zero_vec
    q: Callable = _zero
    gap: Callable = _zero


def _disp_local_dofs(mesh: Mesh) -> np.ndarray:
    """(nt, 6) global displacement dofs ordered (vertex, component)."""
    tri = mesh.triangles
    return np.stack([2 * tri, 2 * tri + 1], axis=-1).reshape(-1, 6)


def _coo(rows, cols, vals, shape) -> sp.csr_matrix:
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def _pairs(dofs: np.ndarray):
    n = dofs.shape[1]
    return np.repeat(dofs, n, axis=1), np.tile(dofs, (1, n))


class ElasticityParts(NamedTuple):
    strain: sp.csr_matrix  # (eps(phi_i), eps(phi_j))
    divergence: sp.csr_matrix  # (div phi_i, div phi_j)


def assemble_elasticity_parts(mesh: Mesh, dofmaps: DofMaps) -> ElasticityParts:
    g = local_p1_gradients(mesh.triangle_coords())  # (nt, a, c)
    area = mesh.areas
    eye = np.eye(2)
    # [t, a, c, b, d]
    gg = np.einsum("tak,tbk->tab", g, g)
    strain = 0.5 * (
        np.einsum("cd,tab->tacbd", eye, gg) + np.einsum("tad,tbc->tacbd", g, g)
    ) * area[:, None, None, None, None]
    div = np.einsum("tac,tbd->tacbd", g, g) * area[:, None, None, None, None]
    dofs = _disp_local_dofs(mesh)
    rows, cols = _pairs(dofs)
    n = dofmaps.displacement.n_dofs
    return ElasticityParts(
        _coo(rows, cols, strain.reshape(-1, 36), (n, n)),
        _coo(rows, cols, div.reshape(-1, 36), (n, n)),
    )


def assemble_elasticity(mesh: Mesh, dofmaps: DofMaps, params: MaterialParams) -> sp.csr_matrix:
    """Stiffness ``2G (eps(phi_i), eps(phi_j)) + lam (div phi_i, div phi_j)``, unconstrained."""
    parts = assemble_elasticity_parts(mesh, dofmaps)
    return (2.0 * params.G * parts.strain + params.lam * parts.divergence).tocsr()


def assemble_cell_divergence(mesh: Mesh, dofmaps: DofMaps) -> sp.csr_matrix:
    """``C[T, i] = int_T div phi_i`` mapping displacements to cellwise volume change."""
    g = local_p1_gradients(mesh.triangle_coords())
    vals = g * mesh.areas[:, None, None]
    rows = np.repeat(np.arange(mesh.n_triangles)[:, None], 6, axis=1)
    return _coo(rows, _disp_local_dofs(mesh), vals.reshape(-1, 6),
                (mesh.n_triangles, dofmaps.displacement.n_dofs))


def assemble_coupling(mesh: Mesh, dofmaps: DofMaps, alpha: float) -> sp.csr_matrix:
    """``B[i, T] = alpha * int_T div phi_i``, so ``(B p)_i = alpha (p, div phi_i)``."""
    return (alpha * assemble_cell_divergence(mesh, dofmaps).T).tocsr()


def assemble_rt0_mass(mesh: Mesh, dofmaps: DofMaps, K) -> sp.csr_matrix:
    """Weighted RT0 mass ``int K^{-1} phi_e . phi_f``."""
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = K * np.eye(2)
    if not np.allclose(K, K.T) or np.linalg.eigvalsh(K).min() <= 0:
        raise ValueError("K must be symmetric positive definite")
    K_inv = np.linalg.inv(K)
    coords = mesh.triangle_coords()
    basis = local_rt0_basis(coords, mesh.triangle_edge_signs)
    rule = TRIANGLE_DEG2
    phi = basis.values(physical_points(coords, rule.points))  # (nt, k, 3, 2)
    w = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    local = np.einsum("tk,tkid,de,tkje->tij", w, phi, K_inv, phi)
    rows, cols = _pairs(mesh.triangle_edges)
    n = dofmaps.flux.n_dofs
    return _coo(rows, cols, local.reshape(-1, 9), (n, n))


def assemble_div(mesh: Mesh, dofmaps: DofMaps) -> sp.csr_matrix:
    """``D[T, e] = int_T div phi_e``, which is the orientation sign (+1 or -1)."""
    rows = np.repeat(np.arange(mesh.n_triangles)[:, None], 3, axis=1)
    return _coo(rows, mesh.triangle_edges, mesh.triangle_edge_signs.astype(float),
                (mesh.n_triangles, dofmaps.flux.n_dofs))


def assemble_p1_mass(mesh: Mesh, dofmaps: DofMaps) -> sp.csr_matrix:
    """Vector P1 mass matrix (used for L2/H1 norms)."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = np.einsum("t,ab,cd->tacbd", mesh.areas, local, np.eye(2))
    rows, cols = _pairs(_disp_local_dofs(mesh))
    n = dofmaps.displacement.n_dofs
    return _coo(rows, cols, vals.reshape(-1, 36), (n, n))


def assemble_p1_gradient_gram(mesh: Mesh, dofmaps: DofMaps) -> sp.csr_matrix:
    """``int grad(phi_i) : grad(phi_j)`` for vector P1 (H1 seminorm)."""
    g = local_p1_gradients(mesh.triangle_coords())
    gg = np.einsum("tak,tbk->tab", g, g) * mesh.areas[:, None, None]
    vals = np.einsum("tab,cd->tacbd", gg, np.eye(2))
    rows, cols = _pairs(_disp_local_dofs(mesh))
    n = dofmaps.displacement.n_dofs
    return _coo(rows, cols, vals.reshape(-1, 36), (n, n))


class LoadVectors(NamedTuple):
    F: np.ndarray  # mechanics right side
    Qv: np.ndarray  # cellwise integrated source
    Gz: np.ndarray  # gravity term tested with RT0 functions


def assemble_body_and_traction(mesh: Mesh, dofmaps: DofMaps, loads: Loads, t: float = 0.0) -> np.ndarray:
    coords = mesh.triangle_coords()
    rule = TRIANGLE_DEG2
    pts = physical_points(coords, rule.points)
    fx = eval_scalar(lambda x, y, s: loads.f0(x, y, s)[0], pts, t)
    fy = eval_scalar(lambda x, y, s: loads.f0(x, y, s)[1], pts, t)
    w = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    # P1 basis values at the quadrature points are the barycentric coordinates
    bx = np.einsum("tk,ka,tk->ta", w, rule.points, fx)
    by = np.einsum("tk,ka,tk->ta", w, rule.points, fy)
    F = np.zeros(dofmaps.displacement.n_dofs)
    np.add.at(F, 2 * mesh.triangles, bx)
    np.add.at(F, 2 * mesh.triangles + 1, by)

    eids = mesh.tagged_edges(Tag.GAMMA2)
    if len(eids):
        a = mesh.vertices[mesh.edges[eids, 0]]
        b = mesh.vertices[mesh.edges[eids, 1]]
        s = EDGE_GAUSS2.points
        p = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        n = np.broadcast_to(mesh.edge_normals[eids][:, None, :], p.shape)
        tx, ty = loads.f2(p[..., 0], p[..., 1], t, n[..., 0], n[..., 1])
        tx = np.broadcast_to(np.asarray(tx, dtype=float), p.shape[:-1])
        ty = np.broadcast_to(np.asarray(ty, dtype=float), p.shape[:-1])
        w = EDGE_GAUSS2.weights[None, :] * mesh.edge_lengths[eids, None]
        shape = np.stack([1.0 - s, s], axis=1)  # (k, endpoint)
        ex = np.einsum("ek,ka,ek->ea", w, shape, tx)
        ey = np.einsum("ek,ka,ek->ea", w, shape, ty)
        np.add.at(F, 2 * mesh.edges[eids], ex)
        np.add.at(F, 2 * mesh.edges[eids] + 1, ey)
    return F


def assemble_source(mesh: Mesh, loads: Loads, t: float = 0.0) -> np.ndarray:
    rule = TRIANGLE_DEG2
    pts = physical_points(mesh.triangle_coords(), rule.points)
    vals = eval_scalar(loads.q, pts, t)
    return vals @ rule.weights * 2.0 * mesh.areas


def elevation_gradients(mesh: Mesh, eta: Optional[Callable]) -> np.ndarray:
    """Cellwise gradient of the P1 interpolant of ``eta`` (exact for linear eta)."""
    if eta is None:
        return np.zeros((mesh.n_triangles, 2))
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    nodal = np.broadcast_to(np.asarray(eta(x, y), dtype=float), x.shape)
    g = local_p1_gradients(mesh.triangle_coords())
    return np.einsum("ta,tad->td", nodal[mesh.triangles], g)


def assemble_gravity(mesh: Mesh, dofmaps: DofMaps, params: MaterialParams) -> np.ndarray:
    """``(rho_f_r g grad(eta), phi_e)`` with ``grad(eta)`` constant per cell."""
    gz = np.zeros(dofmaps.flux.n_dofs)
    if params.rho_f_r * params.g_grav == 0.0 or params.eta is None:
        return gz
    c = params.rho_f_r * params.g_grav * elevation_gradients(mesh, params.eta)
    coords = mesh.triangle_coords()
    basis = local_rt0_basis(coords, mesh.triangle_edge_signs)
    moment = mesh.areas[:, None, None] * (coords.mean(axis=1)[:, None, :] - basis.apex)
    local = basis.coeffs * np.einsum("td,tid->ti", c, moment)
    np.add.at(gz, mesh.triangle_edges, local)
    return gz


def assemble_loads(
    mesh: Mesh, dofmaps: DofMaps, loads: Loads, params: MaterialParams, t: float = 0.0
) -> LoadVectors:
    return LoadVectors(
        assemble_body_and_traction(mesh, dofmaps, loads, t),
        assemble_source(mesh, loads, t),
        assemble_gravity(mesh, dofmaps, params),
    )


def eliminate(A: sp.spmatrix, constrained: np.ndarray) -> sp.csr_matrix:
    """Zero the rows and columns of homogeneous essential dofs and put 1 on their diagonal."""
    n = A.shape[0]
    keep = np.ones(n)
    keep[constrained] = 0.0
    P = sp.diags(keep)
    return (P @ A @ P + sp.diags(1.0 - keep)).tocsr()
