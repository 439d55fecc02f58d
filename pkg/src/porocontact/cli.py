"""Command line entry point.

    porocontact run CONFIG [--out DIR]
    porocontact sweep CONFIG [--jobs N] [--out DIR]
    porocontact validate [--quick]
    porocontact compare-oracle CONFIG [--out DIR]
    porocontact print-bound CONFIG

Failures print a one-line JSON object on stderr and exit nonzero:
2 for configuration errors, 3 for solver failures, 4 for I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import driver
from .config import ConfigError, load_config
from .contact import ContactSolverError
from .fixed_stress import FixedStressError, SimulationError
from .flow import FlowSolveError
from .io import OutputError
from .mesh import MeshError

EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="porocontact", description="Poroelasticity with unilateral contact.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and write CSV, VTK and manifest")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides [output] dir)")

    p = sub.add_parser("sweep", help="run the [sweep] parameter grid")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("validate", help="manufactured solutions and Terzaghi consolidation")
    p.add_argument("--quick", action="store_true", help="coarser meshes")

    p = sub.add_parser("compare-oracle", help="fixed-stress vs monolithic discrepancies per step")
    p.add_argument("config")
    p.add_argument("--out")

    p = sub.add_parser("print-bound", help="print beta and the contraction bound")
    p.add_argument("config")
    return ap


def _error(kind: str, exc: BaseException, code: int, **extra) -> int:
    payload = {"error": kind, "message": str(exc), **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    return cfg


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = None if args.command == "validate" else _load(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)

        if args.command == "print-bound":
            print(driver.bound_line(cfg))
        elif args.command == "run":
            result, files = driver.simulate(cfg)
            its = [r.iterations for r in result.reports]
            print(f"steps={len(result.reports)} max_iterations={max(its)} outputs={cfg.output_dir}")
        elif args.command == "sweep":
            rows = driver.sweep(cfg, jobs=max(1, args.jobs), base_dir=Path(args.config).parent)
            for r in rows:
                ov = " ".join(f"{k}={v:g}" for k, v in sorted(r.overrides.items()))
                print(f"cell {r.cell} {ov} worst_ratio={r.worst_ratio:.6g} bound={r.bound:.6g} "
                      f"iterations={r.max_iterations} converged={r.converged}" + (f" error={r.error}" if r.error else ""))
            if any(r.error for r in rows):
                return _error("SweepError", RuntimeError("one or more sweep cells failed"), EXIT_SOLVER,
                              cells=[r.cell for r in rows if r.error])
        elif args.command == "compare-oracle":
            for r in driver.compare_oracle(cfg):
                print(f"step {r['step']} iterations={r['iterations']} p_L2={r['p_L2']:.3e} "
                      f"u_H1={r['u_H1']:.3e} z_Hdiv={r['z_Hdiv']:.3e}")
        elif args.command == "validate":
            lines = driver.validate(quick=args.quick)
            for line in lines:
                print(line)
            if not all(line.passed for line in lines):
                return _error("ValidationFailed", RuntimeError("validation targets missed"), EXIT_SOLVER,
                              failed=[line.name for line in lines if not line.passed])
    except ConfigError as exc:
        return _error("ConfigError", exc, EXIT_CONFIG, key=exc.key)
    except MeshError as exc:
        return _error(type(exc).__name__, exc, EXIT_CONFIG)
    except (OutputError, OSError) as exc:
        return _error("OutputError", exc, EXIT_IO)
    except (SimulationError, FixedStressError, ContactSolverError, FlowSolveError) as exc:
        return _error(type(exc).__name__, exc, EXIT_SOLVER)
    except ValueError as exc:
        return _error("ValueError", exc, EXIT_CONFIG)
    return 0


def main() -> None:
    sys.exit(run_cli())
