"""Simulation driving for the command line: run, sweep, oracle comparison, validation."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bench import estimate_order, manufactured_biot, terzaghi_case
from .config import SolverConfig, parse_config
from .contact import ContactOptions
from .fespace import interpolate_displacement
from .fixed_stress import (
    Discretization,
    FixedStressSolver,
    SimulationResult,
    contraction_bound,
    beta,
    initial_state,
    run_simulation,
)
from .io import _fmt, _write_text, write_outputs
from .oracle import StateNorms, compare_states, monolithic_step


def build(cfg: SolverConfig):
    mesh = cfg.mesh.build()
    disc = Discretization(mesh, cfg.params, drained=cfg.mesh.drained)
    init = cfg.initial
    u0 = p0 = None
    if "u_x" in init or "u_y" in init:
        fx, fy = init.get("u_x"), init.get("u_y")

        def f(x, y):
            zero = np.zeros_like(np.asarray(x, dtype=float))
            return (fx(x, y) if fx else zero, fy(x, y) if fy else zero)

        u0 = interpolate_displacement(mesh, f)
        u0[disc.dofmaps.displacement.constrained] = 0.0
    if "p" in init:
        c = mesh.centroids
        p0 = init["p"](c[:, 0], c[:, 1])
    return mesh, disc, initial_state(disc, u0=u0, p0=p0)


def contact_options(cfg: SolverConfig) -> ContactOptions:
    return ContactOptions(c=cfg.contact_c, max_as_iters=cfg.max_as_iters)


def simulate(cfg: SolverConfig, outdir: Optional[Path] = None):
    """Run the configured simulation and write its outputs; returns ``(result, files)``."""
    mesh, disc, init = build(cfg)
    result = run_simulation(disc, cfg.loads, cfg.dt, cfg.T, initial=init, tol=cfg.tol, max_iters=cfg.max_iters,
                            stabilization=cfg.stab_L, contact_opts=contact_options(cfg), floor=cfg.floor)
    files = write_outputs(mesh, result.states, result.reports, outdir or cfg.output_dir, cfg.config_hash,
                          cfg.vtk_every)
    return result, files


@dataclass
class SweepRow:
    cell: int
    overrides: dict
    worst_ratio: float
    bound: float
    max_iterations: int
    converged: bool
    error: str = ""


SWEEP_COLUMNS = ("cell", "overrides", "worst_ratio", "bound", "max_iterations", "converged", "error")


def _sweep_cell(args) -> SweepRow:
    text, base_dir, index, overrides, outdir = args
    cfg = parse_config(text, base_dir).with_overrides(overrides)
    try:
        bound = contraction_bound(cfg.params)
    except ValueError:
        bound = math.nan
    try:
        result, _ = simulate(cfg, Path(outdir))
    except Exception as exc:  # one failing cell must not abort the sweep
        return SweepRow(index, overrides, math.nan, bound, 0, False, f"{type(exc).__name__}: {exc}")
    ratios = [r.worst_ratio() for r in result.reports if not math.isnan(r.worst_ratio())]
    return SweepRow(index, overrides, max(ratios) if ratios else math.nan, bound,
                    max(r.iterations for r in result.reports), all(r.converged for r in result.reports))


def sweep(cfg: SolverConfig, jobs: int = 1, base_dir: Optional[Path] = None) -> list[SweepRow]:
    """Run every cell of the parameter grid, each into ``<output>/cell_XXXX``."""
    cells = cfg.sweep_cells()
    if not cfg.sweep:
        raise ValueError("config has no [sweep] section")
    tasks = [(cfg.source_text, base_dir, i, c, str(Path(cfg.output_dir) / f"cell_{i:04d}"))
             for i, c in enumerate(cells)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        ov = ";".join(f"{k}={v!r}" for k, v in sorted(r.overrides.items()))
        lines.append(",".join([str(r.cell), ov, _fmt(r.worst_ratio), _fmt(r.bound), str(r.max_iterations),
                               str(int(r.converged)), r.error.replace(",", ";")]))
    _write_text(Path(cfg.output_dir) / "sweep_summary.csv", "\n".join(lines) + "\n")
    return rows


def compare_oracle(cfg: SolverConfig) -> list[dict]:
    """Per-step discrepancies between the fixed-stress solution and the monolithic step.

    Both start each step from the fixed-stress state of the previous step.
    """
    mesh, disc, state = build(cfg)
    solver = FixedStressSolver(disc, cfg.loads, cfg.dt, cfg.tol, cfg.max_iters, floor=cfg.floor,
                               stabilization=cfg.stab_L, contact_opts=contact_options(cfg))
    norms = StateNorms(disc)
    rows = []
    for step in range(1, cfg.n_steps + 1):
        new, report = solver.solve_time_step(state)
        mono = monolithic_step(disc, state, cfg.loads, cfg.dt, contact_opts=contact_options(cfg))
        d = compare_states(new, mono, disc, norms)
        d.update(step=step, t=new.t, iterations=report.iterations)
        rows.append(d)
        state = new
    keys = ("step", "t", "iterations", "p_L2", "u_H1", "z_Hdiv")
    lines = [",".join(keys)] + [
        ",".join(str(r[k]) if k in ("step", "iterations") else _fmt(r[k]) for k in keys) for r in rows
    ]
    _write_text(Path(cfg.output_dir) / "oracle_comparison.csv", "\n".join(lines) + "\n")
    return rows


@dataclass
class ValidationLine:
    name: str
    value: float
    target: str
    passed: bool

    def __str__(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.6g} (target {self.target})"


def validate(quick: bool = False) -> list[ValidationLine]:
    """Manufactured-solution orders and the Terzaghi profile."""
    ns = (4, 8, 16) if quick else (8, 16, 32)
    recs = [manufactured_biot("trig", n, 0.25) for n in ns]
    hs = [r.h for r in recs]
    out = []
    for key, label in (("p_L2", "p L2"), ("u_H1", "u H1"), ("z_Hdiv", "z Hdiv")):
        est = estimate_order(hs, [getattr(r, key) for r in recs])
        out.append(ValidationLine(f"order {label}", est.order, "1.0 +/- 0.2", abs(est.order - 1.0) <= 0.2))
    lin = manufactured_biot("linear", ns[0], 0.5)
    err = max(lin.p_L2, lin.u_H1, lin.z_Hdiv)
    out.append(ValidationLine("linear patch error", err, "<= 1e-8", err <= 1e-8))
    ter = terzaghi_case(ny=32 if quick else 64, dt=5e-3 if quick else 1e-3, times=(0.2,))
    e = ter.rel_errors[0]
    out.append(ValidationLine("Terzaghi rel L2 at T_v=0.2", e, "<= 0.02", e <= 0.02))
    return out


def bound_line(cfg: SolverConfig) -> str:
    return f"beta={beta(cfg.params):.16g} bound={contraction_bound(cfg.params):.16g}"
