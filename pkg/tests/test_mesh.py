import numpy as np
import pytest

from porocontact.mesh import Mesh, MeshError, MeshParseError, Tag, build_rect_mesh, read_mesh, write_mesh

TAGS = dict(left="GAMMA1", right="GAMMA3", bottom="GAMMA2", top="GAMMA2")


def test_single_cell_mesh():
    m = build_rect_mesh(1, 1, tagging=TAGS)
    assert m.n_triangles == 2
    assert m.n_vertices == 4
    assert m.n_edges == 5
    assert len(m.boundary_edge_ids) == 4
    mids = m.edge_midpoints
    for e in m.boundary_edge_ids:
        x, y = mids[e]
        expected = Tag.GAMMA1 if x == 0 else Tag.GAMMA3 if x == 1 else Tag.GAMMA2
        assert m.edge_tags[e] == expected


def test_two_by_two_counts():
    m = build_rect_mesh(2, 2)
    assert (m.n_triangles, len(m.boundary_edge_ids), m.n_edges) == (8, 8, 16)


@pytest.mark.parametrize("nx,ny,ext", [(3, 5, (0, 1, 0, 1)), (7, 2, (-1, 2, 0.5, 1.25)), (16, 16, (0, 1, 0, 1))])
def test_area_partition(nx, ny, ext):
    m = build_rect_mesh(nx, ny, ext)
    total = (ext[1] - ext[0]) * (ext[3] - ext[2])
    assert abs(m.areas.sum() - total) <= 1e-14 * total


def test_euler_characteristic():
    m = build_rect_mesh(5, 3)
    assert m.n_vertices - m.n_edges + m.n_triangles == 1


def test_edge_normals_outward_on_boundary():
    m = build_rect_mesh(4, 4)
    c = m.centroids
    for e in m.boundary_edge_ids:
        t = m.edge_triangles[e, 0]
        assert (m.edge_midpoints[e] - c[t]) @ m.edge_normals[e] > 0
    assert np.allclose(np.linalg.norm(m.edge_normals, axis=1), 1.0)


def test_interior_edge_signs_opposite():
    m = build_rect_mesh(3, 3)
    signs = {}
    for t in range(m.n_triangles):
        for i in range(3):
            signs.setdefault(m.triangle_edges[t, i], []).append(m.triangle_edge_signs[t, i])
    for e, s in signs.items():
        if m.edge_tags[e] == 0:
            assert sorted(s) == [-1, 1]
        else:
            assert s == [1]


def test_round_trip_exact():
    m = build_rect_mesh(1, 1, tagging=TAGS)
    r = read_mesh(write_mesh(m))
    for name in ("vertices", "triangles", "edges", "edge_tags", "edge_normals", "areas"):
        np.testing.assert_array_equal(getattr(r, name), getattr(m, name))
    assert r.warnings == ()


def test_round_trip_irregular_coordinates():
    m = build_rect_mesh(3, 2, (0.1, 1.0 / 3.0, -0.7, 0.9))
    r = read_mesh(write_mesh(m))
    np.testing.assert_array_equal(r.vertices, m.vertices)


def test_missing_boundary_tag_rejected():
    text = write_mesh(build_rect_mesh(1, 1, tagging=TAGS))
    lines = text.splitlines()
    idx = next(i for i, line in enumerate(lines) if line.startswith("boundary"))
    count = int(lines[idx].split()[1])
    lines[idx] = f"boundary {count - 1}"
    del lines[idx + 1]
    with pytest.raises((MeshParseError, MeshError)):
        read_mesh("\n".join(lines) + "\n")


def test_clockwise_triangle_reoriented_with_warning():
    text = write_mesh(build_rect_mesh(1, 1, tagging=TAGS))
    lines = text.splitlines()
    idx = next(i for i, line in enumerate(lines) if line.startswith("triangles"))
    a, b, c = lines[idx + 1].split()
    lines[idx + 1] = f"{a} {c} {b}"
    m = read_mesh("\n".join(lines) + "\n")
    assert len(m.warnings) == 1
    assert np.all(m.areas > 0)
    assert abs(m.areas.sum() - 1.0) < 1e-15


def test_malformed_header():
    with pytest.raises(MeshParseError):
        read_mesh("not a mesh\n")


def test_requires_gamma1():
    with pytest.raises((MeshError, ValueError)):
        build_rect_mesh(2, 2, tagging=dict(left="GAMMA2", right="GAMMA2", bottom="GAMMA2", top="GAMMA2"))


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, -2)])
def test_bad_resolution(nx, ny):
    with pytest.raises(ValueError):
        build_rect_mesh(nx, ny)


def test_from_arrays_rejects_degenerate():
    v = np.array([[0, 0], [1, 0], [2, 0]], float)
    with pytest.raises((MeshError, ValueError)):
        Mesh.from_arrays(v, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), np.array([1, 1, 1]))


def test_tagged_vertices():
    m = build_rect_mesh(2, 3, tagging=TAGS)
    left = m.tagged_vertices(Tag.GAMMA1)
    assert np.all(m.vertices[left, 0] == 0.0)
    assert len(left) == 4
