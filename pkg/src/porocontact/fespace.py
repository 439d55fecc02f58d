"""Discrete spaces: vector P1 displacements, P0 pressures, RT0 fluxes.

Displacement dofs are interleaved per vertex (``2*v`` is x, ``2*v + 1`` is y).
The RT0 basis function of edge ``e`` carries unit net flux across ``e`` in
the direction of the edge's global normal.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .mesh import Mesh, Tag


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric, (k, 3) on triangles or (k,) parameters on edges
    weights: np.ndarray  # sum to reference measure (1/2 on triangles, 1 on edges)
    degree: int


def _triangle_deg2() -> QuadratureRule:
    a, b = 2.0 / 3.0, 1.0 / 6.0
    pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
    return QuadratureRule(pts, np.full(3, 1.0 / 6.0), 2)


def _triangle_deg5() -> QuadratureRule:
    r = np.sqrt(15.0)
    a, b = (6.0 - r) / 21.0, (6.0 + r) / 21.0
    wa, wb = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    pts += [[a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a]]
    pts += [[b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b]]
    w = np.array([9 / 40, wa, wa, wa, wb, wb, wb]) / 2.0
    return QuadratureRule(np.array(pts), w, 5)


TRIANGLE_DEG2 = _triangle_deg2()
TRIANGLE_DEG5 = _triangle_deg5()
EDGE_GAUSS2 = QuadratureRule(
    np.array([0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0]), np.array([0.5, 0.5]), 3
)


class SpaceKind(enum.Enum):
    DISPLACEMENT = "displacement"
    PRESSURE = "pressure"
    FLUX = "flux"


@dataclass(frozen=True, eq=False)
class DofMap:
    kind: SpaceKind
    n_dofs: int
    entity_dofs: np.ndarray  # (n_entities, dofs_per_entity)
    constrained: np.ndarray  # sorted indices held at zero

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)


class DofMaps(NamedTuple):
    displacement: DofMap
    pressure: DofMap
    flux: DofMap


def make_dofmaps(mesh: Mesh, drained: Iterable[Tag] = ()) -> DofMaps:
    """Build the three dof maps.

    Flux dofs on every boundary edge are held at zero, except on edges whose
    tag is listed in ``drained``: there the flux is free and p = 0 enters
    weakly as a natural condition.
    """
    nv, nt, ne = mesh.n_vertices, mesh.n_triangles, mesh.n_edges
    vdofs = np.arange(2 * nv).reshape(nv, 2)
    clamped = mesh.tagged_vertices(Tag.GAMMA1)
    disp = DofMap(SpaceKind.DISPLACEMENT, 2 * nv, vdofs, np.sort(vdofs[clamped].ravel()))

    pres = DofMap(SpaceKind.PRESSURE, nt, np.arange(nt).reshape(nt, 1), np.empty(0, dtype=np.int64))

    drained = {int(Tag(t)) for t in drained}
    tags = mesh.edge_tags
    closed = (tags > 0) & ~np.isin(tags, list(drained))
    flux = DofMap(SpaceKind.FLUX, ne, np.arange(ne).reshape(ne, 1), np.flatnonzero(closed))
    return DofMaps(disp, pres, flux)


def local_p1_gradients(coords: np.ndarray) -> np.ndarray:
    """Constant gradients of the three barycentric basis functions.

    ``coords`` has shape (3, 2) or (nt, 3, 2); the result has the same shape.
    """
    coords = np.asarray(coords, dtype=float)
    x, y = coords[..., 0], coords[..., 1]
    x1, x2 = np.roll(x, -1, axis=-1), np.roll(x, -2, axis=-1)
    y1, y2 = np.roll(y, -1, axis=-1), np.roll(y, -2, axis=-1)
    twice_area = (x1[..., 0] - x[..., 0]) * (y2[..., 0] - y[..., 0]) - (
        x2[..., 0] - x[..., 0]
    ) * (y1[..., 0] - y[..., 0])
    if np.any(np.abs(twice_area) <= 1e-300) or np.any(twice_area <= 0):
        raise ValueError("degenerate or clockwise triangle")
    return np.stack([y1 - y2, x2 - x1], axis=-1) / twice_area[..., None, None]


def triangle_areas(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    d1 = coords[..., 1, :] - coords[..., 0, :]
    d2 = coords[..., 2, :] - coords[..., 0, :]
    return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


@dataclass(frozen=True)
class RT0Local:
    """Local RT0 basis: ``phi_i(x) = coeffs[i] * (x - apex[i])``.

    ``apex[i]`` is the vertex opposite local edge ``i``; ``divergence[i]``
    is the (constant) divergence, equal to ``sign / area``.
    """

    apex: np.ndarray  # (..., 3, 2)
    coeffs: np.ndarray  # (..., 3)
    divergence: np.ndarray  # (..., 3)

    def values(self, x: np.ndarray) -> np.ndarray:
        """Basis values at points ``x`` of shape (..., k, 2) -> (..., k, 3, 2)."""
        diff = x[..., :, None, :] - self.apex[..., None, :, :]
        return self.coeffs[..., None, :, None] * diff


def local_rt0_basis(coords: np.ndarray, signs: np.ndarray) -> RT0Local:
    coords = np.asarray(coords, dtype=float)
    area = triangle_areas(coords)
    if np.any(area <= 0):
        raise ValueError("degenerate or clockwise triangle")
    signs = np.asarray(signs, dtype=float)
    coeffs = signs / (2.0 * area[..., None])
    return RT0Local(coords, coeffs, signs / area[..., None])


def physical_points(coords: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points (k, 3) onto every triangle: (nt, k, 2)."""
    return np.einsum("kj,tjd->tkd", bary, coords)


def eval_scalar(f: Callable, pts: np.ndarray, *args) -> np.ndarray:
    """Evaluate a vectorized ``f(x, y, *args)``, broadcasting constants."""
    out = f(pts[..., 0], pts[..., 1], *args)
    return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1])


def rt0_values(mesh: Mesh, z: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Values of an RT0 field at barycentric points on every triangle, (nt, k, 2)."""
    coords = mesh.triangle_coords()
    basis = local_rt0_basis(coords, mesh.triangle_edge_signs)
    phi = basis.values(physical_points(coords, bary))
    local = z[mesh.triangle_edges]
    return np.einsum("tkid,ti->tkd", phi, local)


def rt0_divergence(mesh: Mesh, z: np.ndarray) -> np.ndarray:
    """Cellwise divergence of an RT0 field."""
    signs = mesh.triangle_edge_signs
    return (signs * z[mesh.triangle_edges]).sum(axis=1) / mesh.areas


def p1_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Cellwise displacement gradient tensors (nt, 2, 2), ``[t, i, j] = d u_i / d x_j``."""
    grads = local_p1_gradients(mesh.triangle_coords())
    local = u.reshape(-1, 2)[mesh.triangles]  # (nt, 3, comp)
    return np.einsum("tac,tad->tcd", local, grads)


def p1_divergence(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    g = p1_gradients(mesh, u)
    return g[:, 0, 0] + g[:, 1, 1]


def p1_values(mesh: Mesh, u: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Displacement values at barycentric points on every triangle, (nt, k, 2)."""
    local = u.reshape(-1, 2)[mesh.triangles]
    return np.einsum("kj,tjc->tkc", bary, local)


def interpolate_displacement(mesh: Mesh, f: Callable) -> np.ndarray:
    """Nodal interpolant of ``f(x, y) -> (fx, fy)`` as an interleaved dof vector."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    fx, fy = f(x, y)
    out = np.empty(2 * mesh.n_vertices)
    out[0::2] = np.broadcast_to(fx, x.shape)
    out[1::2] = np.broadcast_to(fy, x.shape)
    return out


def interpolate_rt0(mesh: Mesh, f: Callable, rule: QuadratureRule = EDGE_GAUSS2) -> np.ndarray:
    """Canonical RT0 interpolant: dof ``e`` is the flux of ``f`` across ``e``."""
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    s = rule.points
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    fx, fy = f(pts[..., 0], pts[..., 1])
    fx = np.broadcast_to(fx, pts.shape[:-1])
    fy = np.broadcast_to(fy, pts.shape[:-1])
    n = mesh.edge_normals
    flux = fx * n[:, None, 0] + fy * n[:, None, 1]
    return (flux @ rule.weights) * mesh.edge_lengths
