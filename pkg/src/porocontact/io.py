"""Result persistence: iteration CSV, legacy ASCII VTK snapshots, run manifest."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fixed_stress import CSV_COLUMNS, IterationReport, State
from .mesh import Mesh

_INT_COLUMNS = {"k", "n", "active_set_size"}


class OutputError(OSError):
    pass


def _fmt(value) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.16e}"


def format_csv(reports: Iterable[IterationReport]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for report in reports:
        for rec in report.records:
            row = []
            for col in CSV_COLUMNS:
                val = getattr(rec, col)
                row.append(str(int(val)) if col in _INT_COLUMNS else _fmt(val))
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {str(path)!r}: {exc.strerror or exc}") from exc
    return path


def write_csv(reports: Iterable[IterationReport], path) -> Path:
    return _write_text(Path(path), format_csv(reports))


def format_vtk(mesh: Mesh, state: State, title: str = "porocontact") -> str:
    nv, nt = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nv} double")
    out.extend(f"{_fmt(x)} {_fmt(y)} {_fmt(0.0)}" for x, y in mesh.vertices)
    out.append(f"CELLS {nt} {4 * nt}")
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    out.append(f"CELL_TYPES {nt}")
    out.extend(["5"] * nt)
    out.append(f"POINT_DATA {nv}")
    out.append("VECTORS displacement double")
    u = np.asarray(state.u).reshape(nv, 2)
    out.extend(f"{_fmt(a)} {_fmt(b)} {_fmt(0.0)}" for a, b in u)
    out.append(f"CELL_DATA {nt}")
    for name, values in (("pressure", state.p), ("sigma_v", state.sigma_v)):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(_fmt(v) for v in values)
    return "\n".join(out) + "\n"


def write_vtk(mesh: Mesh, state: State, path, title: str = "porocontact") -> Path:
    return _write_text(Path(path), format_vtk(mesh, state, title))


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, config_hash: str, files: Sequence[Path], extra: dict | None = None) -> Path:
    outdir = Path(outdir)
    inventory = []
    for f in sorted(Path(p) for p in files):
        try:
            inventory.append({"path": str(f.relative_to(outdir)), "bytes": f.stat().st_size,
                              "sha256": file_digest(f)})
        except OSError as exc:
            raise OutputError(f"cannot inventory {str(f)!r}: {exc.strerror or exc}") from exc
    data = {"config_sha256": config_hash, "files": inventory}
    if extra:
        data.update(extra)
    return _write_text(outdir / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_outputs(mesh: Mesh, states: Sequence[State], reports: Sequence[IterationReport], outdir,
                  config_hash: str = "", vtk_every: int = 1, extra: dict | None = None) -> list[Path]:
    """Write ``iterations.csv``, ``step_XXXXX.vtk`` snapshots and ``manifest.json``.

    ``states[0]`` is the initial level; a snapshot is written for it and for
    every ``vtk_every``-th step (``vtk_every = 0`` disables VTK output).
    """
    outdir = Path(outdir)
    files = [write_csv(reports, outdir / "iterations.csv")]
    if vtk_every > 0:
        for i, state in enumerate(states):
            if i % vtk_every == 0 or i == len(states) - 1:
                files.append(write_vtk(mesh, state, outdir / f"step_{i:05d}.vtk", f"t = {state.t!r}"))
    files.append(write_manifest(outdir, config_hash, files, extra))
    return files
