import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from porocontact.assembly import Loads, MaterialParams, assemble_div, assemble_elasticity, eliminate
from porocontact.config import ConfigError, Expression
from porocontact.contact import build_constraints, kkt_residuals, solve_contact_vi
from porocontact.fespace import interpolate_displacement, local_rt0_basis, make_dofmaps
from porocontact.fixed_stress import Discretization, FixedStressSolver, beta, contraction_bound, initial_state
from porocontact.io import _fmt
from porocontact.mesh import Mesh, build_rect_mesh
from porocontact.oracle import brute_force_contact

import oracles

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
pos = st.floats(0.05, 20.0, allow_nan=False)


def jittered_mesh(n, seed, amp=0.1):
    base = build_rect_mesh(n, n)
    v = base.vertices.copy()
    inner = (v[:, 0] > 0) & (v[:, 0] < 1) & (v[:, 1] > 0) & (v[:, 1] < 1)
    v[inner] += np.random.default_rng(seed).uniform(-amp / n, amp / n, size=(inner.sum(), 2))
    return Mesh.from_arrays(v, base.triangles, base.boundary_edges, base.boundary_tags)


@SETTINGS
@given(st.integers(1, 9), st.integers(1, 9), st.floats(-5, 5), st.floats(0.1, 10), st.floats(-5, 5),
       st.floats(0.1, 10))
def test_mesh_invariants(nx, ny, x0, w, y0, h):
    m = build_rect_mesh(nx, ny, (x0, x0 + w, y0, y0 + h))
    assert abs(m.areas.sum() - w * h) <= 1e-13 * w * h
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    assert len(m.boundary_edge_ids) == 2 * (nx + ny)
    assert np.all(m.areas > 0)


@SETTINGS
@given(st.integers(0, 10_000), st.integers(1, 4), pos, pos)
def test_elasticity_kernel_and_symmetry(seed, n, lam, G):
    m = jittered_mesh(n, seed)
    d = make_dofmaps(m)
    A = assemble_elasticity(m, d, MaterialParams(lam=lam, G=G))
    scale = abs(A).max()
    for f in (lambda x, y: (1 + 0 * x, 0 * x), lambda x, y: (0 * x, 1 + 0 * x), lambda x, y: (-y, x)):
        assert np.abs(A @ interpolate_displacement(m, f)).max() <= 1e-12 * scale
    assert abs(A - A.T).max() <= 1e-14 * scale
    Ae = eliminate(A, d.displacement.constrained).toarray()
    assert np.linalg.eigvalsh(Ae).min() > 0


@SETTINGS
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.lists(st.sampled_from([-1.0, 1.0]), min_size=3,
                                                                     max_size=3))
def test_rt0_flux_duality(coords, signs):
    P = np.array(coords).reshape(3, 2)
    d1, d2 = P[1] - P[0], P[2] - P[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    assume(det > 0.05)
    edges = [np.linalg.norm(P[(j + 2) % 3] - P[(j + 1) % 3]) for j in range(3)]
    assume(min(edges) > 0.1)
    basis = local_rt0_basis(P, np.array(signs))
    funcs, mids = oracles.rt0_functions(P, signs)
    vals = basis.values(mids)  # (3 points, 3 functions, 2)
    for i in range(3):
        a, b = funcs[i]
        np.testing.assert_allclose(vals[:, i, :], a + b * mids, atol=1e-10)


@SETTINGS
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_divergence_theorem(seed, n):
    m = jittered_mesh(n, seed)
    D = assemble_div(m, make_dofmaps(m))
    z = np.random.default_rng(seed).normal(size=m.n_edges)
    assert abs((D @ z).sum() - z[m.boundary_edge_ids].sum()) <= 1e-12 * (1 + np.abs(z).sum())


@SETTINGS
@given(st.integers(0, 10_000), st.floats(0.0, 0.05))
def test_contact_matches_enumeration(seed, gap0):
    m = build_rect_mesh(3, 3)
    d = make_dofmaps(m)
    A = eliminate(assemble_elasticity(m, d, MaterialParams(lam=1.0, G=1.0)), d.displacement.constrained)
    rng = np.random.default_rng(seed)
    gslope = rng.uniform(0, 0.05)
    cons = build_constraints(m, d, Loads(gap=lambda x, y, t: gap0 + gslope * y))
    rhs = rng.normal(size=d.displacement.n_dofs)
    rhs[d.displacement.constrained] = 0.0
    sol = solve_contact_vi(A, rhs, cons)
    ref = brute_force_contact(A, rhs, cons)
    np.testing.assert_allclose(sol.u, ref.x, atol=1e-10 * max(1.0, np.abs(ref.x).max()))
    r = kkt_residuals(sol, A, rhs, cons)
    assert r["feasibility_scaled"] <= 1e-10 and r["complementarity_scaled"] <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([0.1, 1.0, 10.0]), st.floats(0.3, 1.0), st.floats(0.5, 10.0), st.floats(0.0, 0.05),
       st.floats(0.3, 3.0))
def test_contraction_bound_holds(M, alpha, lam, cfphi, G):
    par = MaterialParams(lam=lam, G=G, alpha=alpha, M=M, c_f=2 * cfphi, phi0=0.5)
    disc = Discretization(build_rect_mesh(5, 5), par)
    loads = Loads(f0=lambda x, y, t: (2.0 + 0 * x, -0.5 + 0 * x), q=lambda x, y, t: 3 * np.sin(np.pi * x) + 0 * y,
                  gap=lambda x, y, t: 0.01 + 0.02 * y)
    solver = FixedStressSolver(disc, loads, 0.1, max_iters=2000)
    _, report = solver.solve_time_step(initial_state(disc))
    bound = contraction_bound(par)
    for rec in report.records[1:]:
        if rec.norm_dsigma > 1e-13:  # ratios of round-off noise carry no information
            assert rec.ratio <= bound + 1e-8
            assert rec.contraction_holds(1e-8)


@SETTINGS
@given(pos, st.floats(0.01, 1.0), pos, st.floats(0, 1), st.floats(0, 0.99))
def test_bound_formula_properties(M, alpha, lam, c_f, phi0):
    par = MaterialParams(lam=lam, G=1.0, alpha=alpha, M=M, c_f=c_f, phi0=phi0)
    b = contraction_bound(par)
    assert 0 < b < 1
    closed = (M * alpha**2 / (lam + M * lam * c_f * phi0 + M * alpha**2)) ** 2
    assert math.isclose(b, closed, rel_tol=1e-12)
    stiffer = MaterialParams(lam=2 * lam, G=1.0, alpha=alpha, M=M, c_f=c_f, phi0=phi0)
    assert contraction_bound(stiffer) <= b * (1 + 1e-12)
    assert beta(par) >= 1 / lam


coef = st.integers(-5, 5)


@SETTINGS
@given(coef, coef, coef, coef, coef, coef)
def test_quadratic_polynomials_accepted(a, b, c, d, e, f):
    src = f"{a} + {b}*x + {c}*y + {d}*x*y + {e}*x**2 + {f}*y**2"
    ex = Expression(src)
    x, y = 0.3, -0.8
    expected = a + b * x + c * y + d * x * y + e * x**2 + f * y**2
    assert math.isclose(float(ex(np.array([x]), np.array([y]), 0.0)[0]), expected, rel_tol=1e-14, abs_tol=1e-14)


@SETTINGS
@given(st.sampled_from(["x", "y", "t"]), st.sampled_from(["x", "y", "t"]), st.sampled_from(["x", "y", "t"]))
def test_cubic_rejected(u, v, w):
    try:
        Expression(f"{u}*{v}*{w}")
    except ConfigError:
        return
    raise AssertionError("cubic accepted")


@SETTINGS
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_float_round_trip(x):
    assert float(_fmt(x)) == x
