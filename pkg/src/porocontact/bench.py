"""Validation problems: manufactured solutions, Terzaghi consolidation, observed orders."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import Loads, MaterialParams
from .fespace import TRIANGLE_DEG5, p1_gradients, p1_values, physical_points, rt0_divergence, rt0_values
from .fixed_stress import Discretization, FixedStressSolver, State, initial_state
from .mesh import Mesh, Tag, build_rect_mesh
from .oracle import compare_states, monolithic_step

PI = math.pi


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields on the unit square plus the data obtained by substituting them.

    Fields are linear in time so backward Euler adds no truncation error and
    the measured errors are purely spatial.  ``z`` is the viscosity-scaled
    flux ``-K grad p``.
    """

    name: str
    params: MaterialParams
    tagging: dict
    u: Callable  # (x, y, t) -> (ux, uy)
    grad_u: Callable  # (x, y, t) -> ((dux/dx, dux/dy), (duy/dx, duy/dy))
    p: Callable
    z: Callable  # (x, y, t) -> (zx, zy)
    div_z: Callable
    loads: Loads
    T: float = 1.0


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def zero_case() -> ManufacturedCase:
    par = MaterialParams(lam=1.0, G=1.0, alpha=1.0, M=1.0)
    z2 = lambda x, y, t: (_zeros(x), _zeros(x))
    z1 = lambda x, y, t: _zeros(x)
    return ManufacturedCase(
        "zero", par, dict(left="GAMMA1", right="GAMMA1", bottom="GAMMA1", top="GAMMA1"),
        z2, lambda x, y, t: ((_zeros(x), _zeros(x)), (_zeros(x), _zeros(x))), z1, z2, z1, Loads(),
    )


def linear_case() -> ManufacturedCase:
    """``u = t (a x, b x)``, ``p = 0``, clamped on the left, tractions elsewhere."""
    lam, G, alpha = 2.0, 1.5, 0.8
    par = MaterialParams(lam=lam, G=G, alpha=alpha, M=4.0)
    a, b = 0.02, 0.01
    # sigma = lam a t I + 2 G t [[a, b/2], [b/2, 0]] (constant in space)
    sxx = lambda t: (lam * a + 2 * G * a) * t
    syy = lambda t: lam * a * t
    sxy = lambda t: G * b * t

    def traction(x, y, t, nx, ny):
        return sxx(t) * nx + sxy(t) * ny, sxy(t) * nx + syy(t) * ny

    def source(x, y, t):
        return alpha * a + _zeros(x)  # d/dt (alpha div u)

    z2 = lambda x, y, t: (_zeros(x), _zeros(x))
    return ManufacturedCase(
        "linear", par, dict(left="GAMMA1", right="GAMMA2", bottom="GAMMA2", top="GAMMA2"),
        lambda x, y, t: (a * t * x, b * t * x),
        lambda x, y, t: ((a * t + _zeros(x), _zeros(x)), (b * t + _zeros(x), _zeros(x))),
        lambda x, y, t: _zeros(x), z2, lambda x, y, t: _zeros(x),
        Loads(f2=traction, q=source),
    )


def trig_case(lam=1.0, G=1.0, alpha=1.0, M=1.0, k=1.0, mu=1.0) -> ManufacturedCase:
    """``u = t (s, s)`` with ``s = sin(pi x) sin(pi y)``, ``p = t cos(pi x) cos(pi y)``, clamped boundary.

    Data (by substitution into momentum and mass balance, s0 = 1/M):
      f0_x = -(lam+G) pi^2 t cos(pi(x+y)) + 2 G pi^2 t s - alpha pi t sin(pi x) cos(pi y)
      f0_y = -(lam+G) pi^2 t cos(pi(x+y)) + 2 G pi^2 t s - alpha pi t cos(pi x) sin(pi y)
      q    = s0 c + alpha pi sin(pi(x+y)) + (2 k / mu) pi^2 t c,   c = cos(pi x) cos(pi y)
    """
    par = MaterialParams(lam=lam, G=G, alpha=alpha, M=M, mu_f=mu, K=k * np.eye(2))
    s0 = 1.0 / M

    def u(x, y, t):
        s = np.sin(PI * x) * np.sin(PI * y)
        return t * s, t * s

    def grad_u(x, y, t):
        gx = PI * t * np.cos(PI * x) * np.sin(PI * y)
        gy = PI * t * np.sin(PI * x) * np.cos(PI * y)
        return (gx, gy), (gx, gy)

    def p(x, y, t):
        return t * np.cos(PI * x) * np.cos(PI * y)

    def z(x, y, t):
        return k * PI * t * np.sin(PI * x) * np.cos(PI * y), k * PI * t * np.cos(PI * x) * np.sin(PI * y)

    def div_z(x, y, t):
        return 2 * k * PI**2 * t * np.cos(PI * x) * np.cos(PI * y)

    def f0(x, y, t):
        common = -(lam + G) * PI**2 * t * np.cos(PI * (x + y)) + 2 * G * PI**2 * t * np.sin(PI * x) * np.sin(PI * y)
        return (common - alpha * PI * t * np.sin(PI * x) * np.cos(PI * y),
                common - alpha * PI * t * np.cos(PI * x) * np.sin(PI * y))

    def q(x, y, t):
        c = np.cos(PI * x) * np.cos(PI * y)
        return s0 * c + alpha * PI * np.sin(PI * (x + y)) + 2 * k / mu * PI**2 * t * c

    return ManufacturedCase(
        "trig", par, dict(left="GAMMA1", right="GAMMA1", bottom="GAMMA1", top="GAMMA1"),
        u, grad_u, p, z, div_z, Loads(f0=f0, q=q),
    )


CASES = {"zero": zero_case, "linear": linear_case, "trig": trig_case}


@dataclass
class ErrorRecord:
    case: str
    h: float
    p_L2: float
    u_H1: float
    z_Hdiv: float
    split_vs_monolithic: dict = field(default_factory=dict)
    iterations: int = 0


def _interp_exact(mesh: Mesh, case: ManufacturedCase, t: float) -> np.ndarray:
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    ux, uy = case.u(x, y, t)
    u = np.empty(2 * mesh.n_vertices)
    u[0::2] = np.broadcast_to(ux, x.shape)
    u[1::2] = np.broadcast_to(uy, x.shape)
    return u


def field_errors(disc: Discretization, state: State, case: ManufacturedCase, t: float) -> tuple[float, float, float]:
    """Errors against the exact fields: p in L2, u in H1, z in H(div)."""
    mesh = disc.mesh
    rule = TRIANGLE_DEG5
    pts = physical_points(mesh.triangle_coords(), rule.points)
    x, y = pts[..., 0], pts[..., 1]
    w = rule.weights[None, :] * 2.0 * mesh.areas[:, None]

    ep = state.p[:, None] - case.p(x, y, t)
    p_err = math.sqrt(float(np.sum(w * ep**2)))

    uh = p1_values(mesh, state.u, rule.points)
    ux, uy = case.u(x, y, t)
    l2u = (uh[..., 0] - ux) ** 2 + (uh[..., 1] - uy) ** 2
    gh = p1_gradients(mesh, state.u)  # (nt, comp, dir)
    (gxx, gxy), (gyx, gyy) = case.grad_u(x, y, t)
    h1u = (
        (gh[:, None, 0, 0] - gxx) ** 2 + (gh[:, None, 0, 1] - gxy) ** 2
        + (gh[:, None, 1, 0] - gyx) ** 2 + (gh[:, None, 1, 1] - gyy) ** 2
    )
    u_err = math.sqrt(float(np.sum(w * (l2u + h1u))))

    zh = rt0_values(mesh, state.z, rule.points)
    zx, zy = case.z(x, y, t)
    l2z = (zh[..., 0] - zx) ** 2 + (zh[..., 1] - zy) ** 2
    dz = rt0_divergence(mesh, state.z)[:, None] - case.div_z(x, y, t)
    z_err = math.sqrt(float(np.sum(w * (l2z + dz**2))))
    return p_err, u_err, z_err


def manufactured_biot(case, n: int, dt: float, tol: float = 1e-11, max_iters: int = 500) -> ErrorRecord:
    """Solve a manufactured case on an ``n x n`` mesh to ``case.T`` and measure errors.

    Each time step is solved by the fixed-stress iteration and by the
    monolithic oracle; the discrepancy is reported alongside the errors.
    """
    if isinstance(case, str):
        case = CASES[case]()
    mesh = build_rect_mesh(n, n, tagging=case.tagging)
    disc = Discretization(mesh, case.params)
    u0 = _interp_exact(mesh, case, 0.0)
    prev = initial_state(disc, u0=u0)
    solver = FixedStressSolver(disc, case.loads, dt, tol=tol, max_iters=max_iters)
    steps = max(1, int(round(case.T / dt)))
    worst = {"p_L2": 0.0, "u_H1": 0.0, "z_Hdiv": 0.0}
    iters = 0
    for _ in range(steps):
        state, report = solver.solve_time_step(prev)
        iters = max(iters, report.iterations)
        mono = monolithic_step(disc, prev, case.loads, dt)
        cmp = compare_states(state, mono, disc)
        for key in worst:
            worst[key] = max(worst[key], cmp[key])
        prev = state
    pe, ue, ze = field_errors(disc, prev, case, prev.t)
    return ErrorRecord(case.name, 1.0 / n, pe, ue, ze, worst, iters)


@dataclass
class OrderEstimate:
    order: float
    pairwise: np.ndarray
    flag: str  # "ok", "non-monotone" or "noisy"


def estimate_order(hs: Sequence[float], errors: Sequence[float], noise_tol: float = 0.25) -> OrderEstimate:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(hs) < 3 or len(hs) != len(errors):
        raise ValueError("need at least three refinement levels")
    if np.any(errors <= 0) or np.any(hs <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    lh, le = np.log(hs), np.log(errors)
    order = float(np.polyfit(lh, le, 1)[0])
    pairwise = np.diff(le) / np.diff(lh)
    order_by_h = np.argsort(hs)
    flag = "ok"
    if np.any(np.diff(errors[order_by_h]) < 0):
        flag = "non-monotone"
    elif np.max(np.abs(pairwise - order)) > noise_tol:
        flag = "noisy"
    return OrderEstimate(order, pairwise, flag)


# --- Terzaghi consolidation -------------------------------------------------


@dataclass(frozen=True)
class TerzaghiSetup:
    """Column of height ``H`` loaded by ``P0`` on its drained top.

    Lateral sides are frictionless zero-gap contact boundaries, which act as
    rollers because the lateral stress stays compressive; the bottom is clamped
    and impermeable.
    """

    params: MaterialParams
    H: float = 1.0
    P0: float = 1.0

    @property
    def constrained_modulus(self) -> float:
        return self.params.lam + 2.0 * self.params.G

    @property
    def consolidation_coefficient(self) -> float:
        par = self.params
        k = par.K[1, 1]
        return (k / par.mu_f) / (par.storage + par.alpha**2 / self.constrained_modulus)

    @property
    def initial_pressure(self) -> float:
        """Undrained (Skempton) response to the instantaneous load."""
        par = self.params
        return par.alpha * self.P0 / (self.constrained_modulus * par.storage + par.alpha**2)


def default_terzaghi() -> TerzaghiSetup:
    # lam = G = alpha = M = 1 and k = 4/3 give c_v = 1 and p0 = P0 / 4
    return TerzaghiSetup(MaterialParams(lam=1.0, G=1.0, alpha=1.0, M=1.0, K=(4.0 / 3.0) * np.eye(2)))


def terzaghi_pressure(y, t, setup: TerzaghiSetup, n_terms: Optional[int] = None) -> np.ndarray:
    """Analytic series for the pore pressure; ``y = 0`` is the impermeable bottom.

    By default enough terms are summed that the first omitted decay factor
    is below ``exp(-40)``, with at least 200 terms.
    """
    y = np.asarray(y, dtype=float)
    if t <= 0:
        return np.full_like(y, setup.initial_pressure)
    zeta = (setup.H - y) / setup.H
    tv = setup.consolidation_coefficient * t / setup.H**2
    if n_terms is None:
        n_terms = max(200, int(math.ceil(math.sqrt(40.0 / tv) / PI)) + 1)
    a = (2 * np.arange(n_terms) + 1) * PI / 2.0
    coef = (2.0 / a) * np.exp(-a * a * tv)
    return setup.initial_pressure * (np.sin(np.multiply.outer(zeta, a)) @ coef)


@dataclass
class TerzaghiResult:
    times: list
    rel_errors: list
    states: list
    setup: TerzaghiSetup
    disc: Discretization

    def profile_norm(self, i: int) -> float:
        return self.disc.l2_cell(self.states[i].p)


def terzaghi_case(
    ny: int = 64,
    dt: float = 1e-3,
    setup: Optional[TerzaghiSetup] = None,
    times: Sequence[float] = (0.2,),
    nx: int = 2,
    tol: float = 1e-10,
) -> TerzaghiResult:
    """Consolidate a thin strip and compare with the series at the requested times."""
    setup = setup or default_terzaghi()
    H = setup.H
    width = nx * H / ny
    mesh = build_rect_mesh(nx, ny, (0.0, width, 0.0, H),
                           dict(left="GAMMA3", right="GAMMA3", bottom="GAMMA1", top="GAMMA2"))
    disc = Discretization(mesh, setup.params, drained=(Tag.GAMMA2,))
    P0 = setup.P0

    def traction(x, y, t, nx_, ny_):
        return _zeros(x), -P0 * ny_

    loads = Loads(f2=traction)
    solver = FixedStressSolver(disc, loads, dt, tol=tol, max_iters=1000)
    state = initial_state(disc)
    rule = TRIANGLE_DEG5
    pts = physical_points(mesh.triangle_coords(), rule.points)
    w = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    targets = sorted(times)
    out_t, out_e, out_s = [], [], []
    step = 0
    for target in targets:
        n_target = int(round(target / dt))
        while step < n_target:
            state, _ = solver.solve_time_step(state)
            step += 1
        exact = terzaghi_pressure(pts[..., 1], state.t, setup)
        err = math.sqrt(float(np.sum(w * (state.p[:, None] - exact) ** 2)))
        ref = math.sqrt(float(np.sum(w * exact**2)))
        out_t.append(state.t)
        out_e.append(err / ref if ref > 0 else err)
        out_s.append(state.copy())
    return TerzaghiResult(out_t, out_e, out_s, setup, disc)
