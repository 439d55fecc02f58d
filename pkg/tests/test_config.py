import numpy as np
import pytest

from porocontact.config import ConfigError, Expression, StabilizationWarning, load_config, parse_config
from porocontact.mesh import Tag

MINIMAL = """
[material]
lam = 2
G = 1
alpha = 0.8
[time]
dt = 0.1
T = 0.5
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.tol == 1e-10
    assert cfg.stabilization == pytest.approx(0.8**2 / 2)
    assert cfg.n_steps == 5
    assert cfg.mesh.nx == 8 and cfg.mode == "simulate"


def test_negative_dt_names_key():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("dt = 0.1", "dt = -0.1"))
    assert info.value.key == "dt"
    assert "dt" in str(info.value)


def test_T_smaller_than_dt():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("T = 0.5", "T = 0.05"))
    assert info.value.key == "T"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "\n[solver]\ntolerance = 1e-8\n")
    assert info.value.key == "tolerance"


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[plots]\nx = 1\n")


def test_missing_required():
    with pytest.raises(ConfigError) as info:
        parse_config("[material]\nlam = 1\n[time]\ndt = 1\nT = 1\n")
    assert info.value.key == "G"


def test_low_stabilization_warns_with_range():
    text = MINIMAL + f"\n[solver]\nstab_L = {0.4 * 0.8**2 / 2}\n"
    with pytest.warns(StabilizationWarning, match=r"alpha\^2/\(2 lam\)") as rec:
        cfg = parse_config(text)
    assert cfg.stabilization == pytest.approx(0.4 * 0.32)
    assert "0.16" in str(rec[0].message)
    assert cfg.warnings


def test_admissible_stabilization_no_warning(recwarn):
    parse_config(MINIMAL + "\n[solver]\nstab_L = 0.2\n")
    assert not [w for w in recwarn if issubclass(w.category, StabilizationWarning)]


def test_material_errors_carry_key():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("alpha = 0.8", "alpha = 1.5"))
    assert info.value.key == "alpha"


def test_full_config(tmp_path):
    text = """
[mesh]
nx = 4
ny = 3
extents = 0, 2, 0, 1
left = GAMMA1
right = gamma3
drained = GAMMA2
[material]
lam = 1
G = 1
kxx = 2
kyy = 0.5
rho_f_r = 1
g_grav = 9.81
eta = y
[loads]
f0_x = 1 + x*y
f2_y = -0.5*ny
q = sin(pi*x)*cos(pi*y)
gap = 0.01 + 0.02*y**2
[initial]
p = x
[time]
dt = 0.25
T = 1
[output]
dir = results
vtk_every = 2
[sweep]
lam = 1, 2, 4
M = 1, 10
"""
    cfg = parse_config(text, base_dir=tmp_path)
    assert cfg.mesh.tagging["right"] == "GAMMA3"
    assert cfg.mesh.drained == (Tag.GAMMA2,)
    np.testing.assert_array_equal(cfg.params.K, [[2, 0], [0, 0.5]])
    assert cfg.output_dir == tmp_path / "results"
    assert len(cfg.sweep_cells()) == 6
    m = cfg.mesh.build()
    assert m.n_triangles == 24
    fx, fy = cfg.loads.f0(np.array([0.5]), np.array([2.0]), 0.0)
    assert fx[0] == pytest.approx(2.0) and fy[0] == 0.0
    assert cfg.loads.gap(np.array([0.0]), np.array([1.0]), 0.0)[0] == pytest.approx(0.03)
    over = cfg.with_overrides({"lam": 4.0, "k": 3.0})
    assert over.params.lam == 4.0
    np.testing.assert_array_equal(over.params.K, 3 * np.eye(2))


def test_mesh_file_must_exist(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "\n[mesh]\nfile = nope.mesh\n", base_dir=tmp_path)
    assert info.value.key == "file"


def test_load_config_reads_mesh_file(tmp_path):
    from porocontact.mesh import build_rect_mesh, write_mesh

    (tmp_path / "m.mesh").write_text(write_mesh(build_rect_mesh(2, 1)))
    (tmp_path / "c.ini").write_text(MINIMAL + "\n[mesh]\nfile = m.mesh\n")
    cfg = load_config(tmp_path / "c.ini")
    assert cfg.mesh.build().n_triangles == 4


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


@pytest.mark.parametrize("src", ["1", "x", "x*y", "x**2", "2*x*y + 3*y - 1", "t*sin(pi*x)*cos(pi*y)",
                                 "-x/2", "sin(2*pi*(x+y))*y**2", "cos(x)**2"])
def test_whitelisted_expressions(src):
    e = Expression(src)
    x, y = np.array([0.3, 0.7]), np.array([0.2, 0.9])
    expected = eval(src, {"sin": np.sin, "cos": np.cos, "pi": np.pi, "x": x, "y": y, "t": 0.5})
    np.testing.assert_allclose(e(x, y, 0.5), np.broadcast_to(expected, x.shape))


@pytest.mark.parametrize("src", ["x**3", "x*y*t", "x**y", "1/x", "exp(x)", "sin(x*y)", "__import__('os')",
                                 "x if y else 1", "abs(x)", "z", "x**0.5", "1/sin(x)", "x/cos(pi*y)", "[1]", "'a'", "lambda: 1"])
def test_rejected_expressions(src):
    with pytest.raises(ConfigError):
        Expression(src)


def test_expression_broadcasts_constants():
    assert Expression("2.5")(np.zeros(4), np.zeros(4), 0.0).shape == (4,)
