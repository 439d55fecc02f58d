import math

import numpy as np
import pytest

from porocontact.assembly import Loads, MaterialParams
from porocontact.fixed_stress import (
    Discretization,
    FixedStressError,
    FixedStressSolver,
    State,
    beta,
    contraction_bound,
    initial_state,
    run_simulation,
    solve_time_step,
    update_sigma_v,
)
from porocontact.mesh import build_rect_mesh

import oracles

CONTACT_LOADS = Loads(
    f0=lambda x, y, t: (2.0 + 0 * x, -0.5 + 0 * x),
    q=lambda x, y, t: 3 * np.sin(np.pi * x) * np.cos(np.pi * y),
    gap=lambda x, y, t: 0.02 + 0.05 * y,
)


def make(n=6, **kw):
    par = MaterialParams(**{"lam": 1.0, "G": 1.0, **kw})
    return Discretization(build_rect_mesh(n, n), par)


def closed_form_bound(M, alpha, lam, cf_phi0):
    # closed form of (1/(lam beta))^2 after clearing denominators
    return (M * alpha**2 / (lam + M * lam * cf_phi0 + M * alpha**2)) ** 2


@pytest.mark.parametrize(
    "M,alpha,lam,c_f,phi0,expected",
    [(1.0, 1.0, 1.0, 0.0, 0.0, 2.0), (10.0, 0.8, 2.0, 0.02, 0.5, 0.671875)],
)
def test_beta_values(M, alpha, lam, c_f, phi0, expected):
    assert beta(MaterialParams(lam=lam, G=1, alpha=alpha, M=M, c_f=c_f, phi0=phi0)) == pytest.approx(expected,
                                                                                                       rel=1e-15)


@pytest.mark.parametrize(
    "M,alpha,lam,cf_phi0",
    [(1.0, 1.0, 1.0, 0.0), (10.0, 0.8, 2.0, 0.01), (0.1, 0.5, 10.0, 0.05), (3.0, 0.3, 0.2, 0.0)],
)
def test_bound_two_routes(M, alpha, lam, cf_phi0):
    par = MaterialParams(lam=lam, G=1, alpha=alpha, M=M, c_f=2 * cf_phi0, phi0=0.5)
    assert contraction_bound(par) == pytest.approx(closed_form_bound(M, alpha, lam, cf_phi0), rel=1e-14)
    assert 0 < contraction_bound(par) < 1


def test_bound_examples():
    assert contraction_bound(MaterialParams(lam=1, G=1)) == pytest.approx(0.25, rel=1e-15)
    par = MaterialParams(lam=2, G=1, alpha=0.8, M=10, c_f=0.02, phi0=0.5)
    assert contraction_bound(par) == pytest.approx((1 / 1.34375) ** 2, rel=1e-14)
    assert contraction_bound(par) == pytest.approx(1024 / 1849, rel=1e-14)  # lam beta = 43/32


def test_limits():
    assert beta(MaterialParams(lam=4, G=1, M=1e12)) == pytest.approx(0.25, rel=1e-10)
    assert contraction_bound(MaterialParams(lam=1, G=1, alpha=1e-6)) < 1e-20
    with pytest.raises(ValueError):
        beta(MaterialParams(lam=1, G=1, alpha=0.0))


def test_sigma_no_increment():
    disc = make(3)
    prev = initial_state(disc, p0=np.arange(disc.n_p, dtype=float))
    prev.sigma_v = np.random.default_rng(0).normal(size=disc.n_p)
    np.testing.assert_array_equal(update_sigma_v(disc, np.zeros(disc.n_u), prev.p, prev), prev.sigma_v)


def test_sigma_delta_constant_pressure():
    disc = make(3, alpha=0.6)
    prev = initial_state(disc)
    u = np.random.default_rng(1).normal(size=disc.n_u)
    p = np.random.default_rng(2).normal(size=disc.n_p)
    d = update_sigma_v(disc, u, p + 1.5, prev) - update_sigma_v(disc, u, p, prev)
    np.testing.assert_allclose(d, -0.6 * 1.5, atol=1e-14)


def test_sigma_matches_per_cell_oracle():
    disc = make(4, lam=2.3, alpha=0.7)
    rng = np.random.default_rng(3)
    prev = State(rng.normal(size=disc.n_u), rng.normal(size=disc.n_p), np.zeros(disc.n_z),
                 rng.normal(size=disc.n_p), 0, 0.0)
    u, p = rng.normal(size=disc.n_u), rng.normal(size=disc.n_p)
    expected = prev.sigma_v + 2.3 * oracles.cell_divergence_of(disc.mesh, u - prev.u) - 0.7 * (p - prev.p)
    np.testing.assert_allclose(update_sigma_v(disc, u, p, prev), expected, atol=1e-13)


def test_fixed_point_at_converged_state():
    disc = make(6)
    solver = FixedStressSolver(disc, CONTACT_LOADS, 0.1, tol=1e-12, max_iters=300)
    prev = initial_state(disc)
    state, _ = solver.solve_time_step(prev)
    again, rec, _ = solver.coupled_iterate(prev, state, 1)
    scale = max(disc.l2_cell(state.sigma_v), 1.0)
    assert rec.norm_dsigma <= 1e-10 * scale
    np.testing.assert_allclose(again.u, state.u, atol=1e-10)


def test_decoupled_converges_in_two_iterations():
    disc = make(6, alpha=0.0)
    solver = FixedStressSolver(disc, CONTACT_LOADS, 0.1, stabilization=0.0)
    state, report = solver.solve_time_step(initial_state(disc))
    assert report.converged and report.iterations <= 2
    assert math.isnan(solver.bound)


def test_contraction_on_contact_problem():
    disc = make(8, M=1.0, alpha=0.9, lam=2.0)
    solver = FixedStressSolver(disc, CONTACT_LOADS, 0.1)
    state, report = solver.solve_time_step(initial_state(disc))
    assert report.converged
    assert state.active.any()
    bound = contraction_bound(disc.params)
    for rec in report.records[1:]:
        assert rec.ratio <= bound + 1e-8
        assert rec.contraction_holds(1e-8)
    assert math.isnan(report.records[0].ratio)


def test_below_admissible_stabilization_fails_to_contract():
    disc = make(6, M=10.0, alpha=1.0, lam=1.0)
    L = 0.1 * 1.0 / 2.0
    solver = FixedStressSolver(disc, CONTACT_LOADS, 0.1, max_iters=60, stabilization=L)
    try:
        _, report = solver.solve_time_step(initial_state(disc))
    except FixedStressError as exc:
        report = exc.report
        assert "admissible" in str(exc)
    assert report.worst_ratio() > 1.0 or not report.converged


def test_zero_problem_stays_zero():
    disc = make(4)
    res = run_simulation(disc, Loads(), 0.1, 0.3)
    assert len(res.states) == 4
    for s in res.states:
        assert not s.u.any() and not s.p.any() and not s.z.any() and not s.sigma_v.any()


def test_one_step_equals_solve_time_step():
    disc = make(5)
    res = run_simulation(disc, CONTACT_LOADS, 0.1, 0.1)
    state, _ = solve_time_step(disc, initial_state(disc), CONTACT_LOADS, 0.1)
    np.testing.assert_array_equal(res.states[1].u, state.u)
    np.testing.assert_array_equal(res.states[1].p, state.p)


def test_time_step_refinement_consistency():
    disc = make(5)
    loads = Loads(f0=lambda x, y, t: (t + 0 * x, 0 * x), q=lambda x, y, t: np.sin(np.pi * x) + 0 * t)
    coarse = run_simulation(disc, loads, 0.2, 0.2).states[-1]
    fine = run_simulation(disc, loads, 0.1, 0.2).states[-1]
    finer = run_simulation(disc, loads, 0.05, 0.2).states[-1]
    d1 = disc.l2_cell(coarse.p - fine.p)
    d2 = disc.l2_cell(fine.p - finer.p)
    assert d2 < d1  # differences shrink with dt


def test_report_fields_and_kkt():
    disc = make(6)
    solver = FixedStressSolver(disc, CONTACT_LOADS, 0.1)
    _, report = solver.solve_time_step(initial_state(disc))
    assert report.kkt["feasibility_scaled"] <= 1e-10
    assert report.kkt["complementarity_scaled"] <= 1e-12
    assert all(r.k == 1 for r in report.records)
    assert [r.n for r in report.records] == list(range(1, report.iterations + 1))
    assert max(r.mass_residual for r in report.records) <= 1e-11


def test_invalid_tolerance():
    with pytest.raises(ValueError):
        FixedStressSolver(make(2), Loads(), 0.1, tol=0.0)
