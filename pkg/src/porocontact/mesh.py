"""Conforming triangular meshes of polygonal 2D domains with tagged boundaries.

Boundary edges carry one of three tags: ``GAMMA1`` (clamped, u = 0),
``GAMMA2`` (prescribed traction) and ``GAMMA3`` (frictionless unilateral
contact with a rigid foundation).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class Tag(enum.IntEnum):
    GAMMA1 = 1
    GAMMA2 = 2
    GAMMA3 = 3


class MeshError(ValueError):
    """A mesh violates one of its structural invariants."""


class MeshParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation plus derived edge topology.

    Edges are numbered globally; each carries a unit normal that points out
    of its lower-indexed adjacent triangle (outward for boundary edges).
    Local edge ``i`` of a triangle is the edge opposite its vertex ``i``.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    boundary_edges: np.ndarray  # (nb, 2) vertex pairs as given
    boundary_tags: np.ndarray  # (nb,) Tag values
    edges: np.ndarray  # (ne, 2) sorted vertex pairs
    edge_triangles: np.ndarray  # (ne, 2), second entry -1 on the boundary
    edge_normals: np.ndarray  # (ne, 2)
    edge_lengths: np.ndarray  # (ne,)
    edge_tags: np.ndarray  # (ne,) 0 for interior edges
    triangle_edges: np.ndarray  # (nt, 3) global edge opposite local vertex i
    triangle_edge_signs: np.ndarray  # (nt, 3) +1 if edge normal is outward for the triangle
    areas: np.ndarray  # (nt,)
    warnings: tuple[str, ...] = field(default=())

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @property
    def boundary_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tags > 0)

    def tagged_edges(self, tag: Tag) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == int(tag))

    def tagged_vertices(self, tag: Tag) -> np.ndarray:
        return np.unique(self.edges[self.tagged_edges(tag)])

    def triangle_coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @classmethod
    def from_arrays(
        cls,
        vertices,
        triangles,
        boundary_edges,
        boundary_tags,
        warnings: Sequence[str] = (),
    ) -> "Mesh":
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        boundary_tags = np.array([int(Tag(t)) for t in boundary_tags], dtype=np.int64)
        if len(boundary_tags) != len(boundary_edges):
            raise MeshError("every boundary edge needs exactly one tag")
        nv = len(vertices)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
            raise MeshError("triangle references a vertex index out of range")
        if boundary_edges.size and (boundary_edges.min() < 0 or boundary_edges.max() >= nv):
            raise MeshError("boundary edge references a vertex index out of range")

        xy = vertices[triangles]
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        scale = max(np.ptp(vertices, axis=0).max() if nv else 1.0, 1e-300)
        if np.any(areas <= 1e-14 * scale**2):
            bad = int(np.flatnonzero(areas <= 1e-14 * scale**2)[0])
            raise MeshError(f"positive-area invariant violated by triangle {bad}")

        nt = len(triangles)
        local = np.stack(
            [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        keys = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("conformity invariant violated: an edge is shared by more than two triangles")
        triangle_edges = inverse.reshape(nt, 3)

        ne = len(edges)
        owner_tri = np.repeat(np.arange(nt), 3)
        order = np.lexsort((owner_tri, inverse))
        edge_triangles = np.full((ne, 2), -1, dtype=np.int64)
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_triangles[inverse[order][first], 0] = owner_tri[order][first]
        edge_triangles[inverse[order][~first], 1] = owner_tri[order][~first]

        # outward normal of the lower-indexed triangle, from its CCW traversal
        slot = np.flatnonzero(first)
        lead = order[slot]
        a = vertices[local[lead, 0]]
        b = vertices[local[lead, 1]]
        d = b - a
        lengths = np.hypot(d[:, 0], d[:, 1])
        normals = np.empty((ne, 2))
        normals[inverse[lead]] = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
        edge_lengths = np.empty(ne)
        edge_lengths[inverse[lead]] = lengths

        signs = np.where(edge_triangles[triangle_edges, 0] == np.arange(nt)[:, None], 1, -1)

        on_boundary = edge_triangles[:, 1] < 0
        edge_tags = np.zeros(ne, dtype=np.int64)
        lookup = {tuple(e): i for i, e in enumerate(edges.tolist())}
        for (i, j), tag in zip(boundary_edges.tolist(), boundary_tags.tolist()):
            eid = lookup.get((min(i, j), max(i, j)))
            if eid is None or not on_boundary[eid]:
                raise MeshError(
                    f"boundary invariant violated: ({i}, {j}) is not an edge of exactly one triangle"
                )
            if edge_tags[eid]:
                raise MeshError(f"tag partition invariant violated: edge ({i}, {j}) tagged twice")
            edge_tags[eid] = tag
        if np.any(on_boundary & (edge_tags == 0)):
            eid = int(np.flatnonzero(on_boundary & (edge_tags == 0))[0])
            raise MeshError(f"tag partition invariant violated: boundary edge {tuple(edges[eid])} has no tag")
        if not np.any(edge_tags == Tag.GAMMA1):
            raise MeshError("GAMMA1 must be nonempty (clamped boundary of positive measure)")

        return cls(
            vertices=_frozen(vertices),
            triangles=_frozen(triangles),
            boundary_edges=_frozen(boundary_edges),
            boundary_tags=_frozen(boundary_tags),
            edges=_frozen(edges),
            edge_triangles=_frozen(edge_triangles),
            edge_normals=_frozen(normals),
            edge_lengths=_frozen(edge_lengths),
            edge_tags=_frozen(edge_tags),
            triangle_edges=_frozen(triangle_edges),
            triangle_edge_signs=_frozen(signs),
            areas=_frozen(areas),
            warnings=tuple(warnings),
        )


SIDES = ("left", "right", "bottom", "top")


def build_rect_mesh(
    nx: int,
    ny: int,
    extents: Sequence[float] = (0.0, 1.0, 0.0, 1.0),
    tagging: Mapping[str, Tag | str] | None = None,
) -> Mesh:
    """Structured right-split triangulation of ``[x0, x1] x [y0, y1]``.

    ``tagging`` maps each of ``left``, ``right``, ``bottom``, ``top`` to a tag;
    the default clamps the left side, puts the contact zone on the right and
    leaves top and bottom traction-driven.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    x0, x1, y0, y1 = map(float, extents)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate extents {tuple(extents)}")
    if tagging is None:
        tagging = {"left": Tag.GAMMA1, "right": Tag.GAMMA3, "bottom": Tag.GAMMA2, "top": Tag.GAMMA2}
    if set(tagging) != set(SIDES):
        raise ValueError(f"tagging must assign exactly the sides {SIDES}")
    tags = {side: Tag[t] if isinstance(t, str) else Tag(t) for side, t in tagging.items()}
    if Tag.GAMMA1 not in tags.values():
        raise ValueError("at least one side must be tagged GAMMA1")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    bedges, btags = [], []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append(tags["bottom"])
    for j in range(ny):
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        btags.append(tags["right"])
    for i in range(nx, 0, -1):
        bedges.append((vid(i, ny), vid(i - 1, ny)))
        btags.append(tags["top"])
    for j in range(ny, 0, -1):
        bedges.append((vid(0, j), vid(0, j - 1)))
        btags.append(tags["left"])
    return Mesh.from_arrays(vertices, triangles, bedges, btags)


def write_mesh(mesh: Mesh) -> str:
    lines = ["poromesh 1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [
        f"{i} {j} {Tag(t).name}"
        for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())
    ]
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    """Parse the ``poromesh 1`` plain-text format.

    Clockwise triangles are reoriented and reported in ``Mesh.warnings``.
    """
    rows = [(n, line.split()) for n, line in enumerate(text.splitlines(), start=1)]
    rows = [(n, toks) for n, toks in rows if toks]
    pos = 0

    def take(expected_len=None):
        nonlocal pos
        if pos >= len(rows):
            last = rows[-1][0] if rows else 0
            raise MeshParseError(last + 1, "unexpected end of file")
        n, toks = rows[pos]
        pos += 1
        if expected_len is not None and len(toks) != expected_len:
            raise MeshParseError(n, f"expected {expected_len} fields, got {len(toks)}")
        return n, toks

    def section(name):
        n, toks = take(2)
        if toks[0] != name:
            raise MeshParseError(n, f"expected section '{name}', got '{toks[0]}'")
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshParseError(n, f"bad count '{toks[1]}'") from None
        if count < 0:
            raise MeshParseError(n, "negative count")
        return count

    n, toks = take()
    if toks != ["poromesh", "1"]:
        raise MeshParseError(n, "missing header 'poromesh 1'")

    vertices = []
    for _ in range(section("vertices")):
        n, toks = take(2)
        try:
            vertices.append((float(toks[0]), float(toks[1])))
        except ValueError:
            raise MeshParseError(n, "bad vertex coordinates") from None

    triangles = []
    for _ in range(section("triangles")):
        n, toks = take(3)
        try:
            tri = [int(t) for t in toks]
        except ValueError:
            raise MeshParseError(n, "bad triangle indices") from None
        if min(tri) < 0 or max(tri) >= len(vertices):
            raise MeshParseError(n, "triangle vertex index out of range")
        triangles.append(tri)

    bedges, btags = [], []
    for _ in range(section("boundary")):
        n, toks = take()
        if len(toks) != 3:
            raise MeshParseError(n, "boundary edge needs 'i j TAG'")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise MeshParseError(n, "bad boundary edge indices") from None
        if toks[2] not in Tag.__members__:
            raise MeshParseError(n, f"unknown boundary tag '{toks[2]}'")
        bedges.append((i, j))
        btags.append(Tag[toks[2]])
    if pos != len(rows):
        raise MeshParseError(rows[pos][0], "trailing content after boundary section")

    warnings = []
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(t):
        xy = v[t]
        d1, d2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
        signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        for k in np.flatnonzero(signed < 0):
            t[k, [1, 2]] = t[k, [2, 1]]
            warnings.append(f"triangle {int(k)} was clockwise; reoriented")
    return Mesh.from_arrays(v, t, bedges, btags, warnings=warnings)
