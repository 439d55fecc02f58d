import json
import math

import numpy as np
import pytest

from porocontact.assembly import Loads, MaterialParams
from porocontact.fixed_stress import CSV_COLUMNS, Discretization, IterationRecord, IterationReport, run_simulation
from porocontact.io import OutputError, format_csv, format_vtk, write_outputs
from porocontact.mesh import build_rect_mesh


def fake_report(k, n_iters):
    recs = [IterationRecord(k, n, 0.5**n, 0.1, 0.2, 0.3, 0.4, math.nan if n == 1 else 0.25, 0.25, 3)
            for n in range(1, n_iters + 1)]
    return IterationReport(k, recs, True)


def test_csv_rows_and_format():
    text = format_csv([fake_report(1, 5)])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == "1" and first[1] == "1" and first[-1] == "3"
    assert first[2] == "5.0000000000000000e-01"
    assert first[7] == "nan"
    assert len(first[3].split("e")[0].replace(".", "")) == 17


def test_vtk_structure():
    m = build_rect_mesh(3, 2)
    disc = Discretization(m, MaterialParams(lam=1, G=1))
    res = run_simulation(disc, Loads(f0=lambda x, y, t: (1 + 0 * x, 0 * x)), 0.1, 0.1)
    text = format_vtk(m, res.states[-1])
    lines = text.splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in lines
    assert f"CELL_TYPES {m.n_triangles}" in lines
    assert f"POINTS {m.n_vertices} double" in lines
    assert "VECTORS displacement double" in lines
    assert "SCALARS pressure double 1" in lines and "SCALARS sigma_v double 1" in lines
    i = lines.index("SCALARS pressure double 1")
    p = np.array([float(v) for v in lines[i + 2:i + 2 + m.n_triangles]])
    np.testing.assert_array_equal(p, res.states[-1].p)


def test_write_outputs_inventory(tmp_path):
    m = build_rect_mesh(2, 2)
    disc = Discretization(m, MaterialParams(lam=1, G=1))
    res = run_simulation(disc, Loads(), 0.1, 0.3)
    files = write_outputs(m, res.states, res.reports, tmp_path, "abc", vtk_every=2)
    names = sorted(f.name for f in files)
    assert names == ["iterations.csv", "manifest.json", "step_00000.vtk", "step_00002.vtk", "step_00003.vtk"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_sha256"] == "abc"
    assert {f["path"] for f in manifest["files"]} == set(names) - {"manifest.json"}
    rows = (tmp_path / "iterations.csv").read_text().splitlines()[1:]
    assert len(rows) == sum(r.iterations for r in res.reports)


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match="file"):
        write_outputs(build_rect_mesh(1, 1), [], [], blocker / "sub")
