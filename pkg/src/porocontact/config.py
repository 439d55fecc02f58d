"""Run configuration: an INI-style file with bracketed sections and ``key = value`` lines.

Sections and keys (all optional unless noted)::

    [mesh]      nx, ny, extents = xmin, xmax, ymin, ymax, file,
                left, right, bottom, top  (GAMMA1 | GAMMA2 | GAMMA3), drained = GAMMA2, ...
    [material]  lam, G (required), alpha, M, c_f, phi0, mu_f, k or kxx/kxy/kyy,
                rho_f_r, g_grav, eta (expression)
    [loads]     f0_x, f0_y, f2_x, f2_y, q, gap (expressions)
    [initial]   u_x, u_y, p (expressions, t = 0)
    [time]      dt (required), T (required)
    [solver]    tol, max_iters, stab_L, floor, contact_c, max_as_iters
    [output]    dir, vtk_every, mode (simulate | sweep | validate | compare-oracle)
    [sweep]     any [material] or [solver] scalar key = comma separated values

Expressions may use ``x, y, t, pi`` (tractions also ``nx, ny``), numbers,
``+ - * /``, ``**`` with a constant exponent of 0, 1 or 2, and ``sin``/``cos``
of affine arguments.  The polynomial degree, counting trig factors as
degree 0, is at most 2, and division is by constants only.
"""
from __future__ import annotations

import ast
import configparser
import hashlib
import itertools
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assembly import Loads, MaterialParams
from .mesh import Mesh, Tag, build_rect_mesh, read_mesh


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class StabilizationWarning(UserWarning):
    pass


# --- expressions ------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
MAX_DEGREE = 2


class Expression:
    """A whitelisted scalar expression compiled to a vectorized callable."""

    def _has_variable(self, node) -> bool:
        return any(isinstance(n, ast.Name) and n.id in self.variables for n in ast.walk(node))

    def __init__(self, source: str, variables: tuple[str, ...] = ("x", "y", "t")):
        self.source = source.strip()
        self.variables = variables
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}") from exc
        self.degree = self._degree(tree.body)
        if self.degree > MAX_DEGREE:
            raise ConfigError(f"expression {self.source!r} has polynomial degree {self.degree} > {MAX_DEGREE}")
        self._code = compile(tree, "<expr>", "eval")

    def _degree(self, node) -> int:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ConfigError(f"unsupported literal in {self.source!r}")
            return 0
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return 0
            if node.id in self.variables:
                return 1
            raise ConfigError(f"unknown name {node.id!r} in {self.source!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            return self._degree(node.operand)
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            left = self._degree(node.left)
            if isinstance(node.op, ast.Pow):
                exp = node.right
                if not (isinstance(exp, ast.Constant) and type(exp.value) is int and 0 <= exp.value <= 2):
                    raise ConfigError(f"only constant exponents 0, 1, 2 are allowed in {self.source!r}")
                return left * exp.value
            right = self._degree(node.right)
            if isinstance(node.op, ast.Div):
                if right or self._has_variable(node.right):
                    raise ConfigError(f"division by a non-constant in {self.source!r}")
                return left
            if isinstance(node.op, ast.Mult):
                return left + right
            return max(left, right)
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords or len(node.args) != 1:
                raise ConfigError(f"only sin(...) and cos(...) calls are allowed in {self.source!r}")
            if self._degree(node.args[0]) > 1:
                raise ConfigError(f"trigonometric arguments must be affine in {self.source!r}")
            return 0
        raise ConfigError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def __call__(self, *args):
        env = dict(zip(self.variables, (np.asarray(a, dtype=float) for a in args)))
        env["pi"] = math.pi
        val = eval(self._code, {"__builtins__": {}, **_FUNCS}, env)
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"


def _pair(ex: Expression, ey: Expression) -> Callable:
    return lambda *a: (ex(*a), ey(*a))


# --- config -----------------------------------------------------------------

_SCHEMA = {
    "mesh": {"nx", "ny", "extents", "file", "left", "right", "bottom", "top", "drained"},
    "material": {"lam", "G", "alpha", "M", "c_f", "phi0", "mu_f", "k", "kxx", "kxy", "kyy",
                 "rho_f_r", "g_grav", "eta"},
    "loads": {"f0_x", "f0_y", "f2_x", "f2_y", "q", "gap"},
    "initial": {"u_x", "u_y", "p"},
    "time": {"dt", "T"},
    "solver": {"tol", "max_iters", "stab_L", "floor", "contact_c", "max_as_iters"},
    "output": {"dir", "vtk_every", "mode"},
    "sweep": None,  # validated against material and solver keys
}
_SWEEPABLE = {"lam", "G", "alpha", "M", "c_f", "phi0", "mu_f", "k", "stab_L", "tol"}
MODES = ("simulate", "sweep", "validate", "compare-oracle")


@dataclass
class MeshSpec:
    nx: int = 8
    ny: int = 8
    extents: tuple = (0.0, 1.0, 0.0, 1.0)
    file: Optional[Path] = None
    tagging: dict = field(default_factory=lambda: dict(left="GAMMA1", right="GAMMA3", bottom="GAMMA2", top="GAMMA2"))
    drained: tuple = ()

    def build(self) -> Mesh:
        if self.file is not None:
            return read_mesh(Path(self.file).read_text())
        return build_rect_mesh(self.nx, self.ny, self.extents, self.tagging)


@dataclass
class SolverConfig:
    mesh: MeshSpec
    params: MaterialParams
    loads: Loads
    dt: float
    T: float
    initial: dict = field(default_factory=dict)  # name -> Expression
    tol: float = 1e-10
    max_iters: int = 200
    floor: float = 1.0
    stab_L: Optional[float] = None
    contact_c: float = 1.0
    max_as_iters: int = 100
    output_dir: Path = Path("out")
    vtk_every: int = 1
    mode: str = "simulate"
    sweep: dict = field(default_factory=dict)  # key -> list of floats
    source_text: str = ""
    warnings: list = field(default_factory=list)

    @property
    def stabilization(self) -> float:
        return self.params.stabilization if self.stab_L is None else self.stab_L

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def sweep_cells(self) -> list[dict]:
        keys = sorted(self.sweep)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.sweep[k] for k in keys))]

    def with_overrides(self, overrides: dict) -> "SolverConfig":
        """Copy with scalar material/solver values replaced (used by sweeps)."""
        mat, top = {}, {}
        for key, val in overrides.items():
            if key == "k":
                mat["K"] = val
            elif key in ("stab_L", "tol"):
                top[key] = val
            else:
                mat[key] = val
        params = replace(self.params, **mat)
        if "K" in mat:
            params = replace(params, K=np.asarray(mat["K"], float) * np.eye(2))
        return replace(self, params=params, **top)


def _float(sec, key) -> float:
    raw = sec[key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key) from None


def _int(sec, key) -> int:
    raw = sec[key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", key) from None


def _tag(key, raw) -> str:
    name = raw.strip().upper()
    if name not in Tag.__members__:
        raise ConfigError(f"unknown boundary tag {raw!r}", key)
    return name


def parse_config(text: str, base_dir: Optional[os.PathLike] = None) -> SolverConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (G vs g_grav)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for name in parser.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]", name)
        allowed = _SCHEMA[name] if name != "sweep" else _SWEEPABLE
        for key in parser[name]:
            if key not in allowed:
                raise ConfigError(f"unknown key in [{name}]", key)
    sec = {name: parser[name] if parser.has_section(name) else {} for name in _SCHEMA}
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    notes: list[str] = []

    # mesh
    m = sec["mesh"]
    mesh = MeshSpec()
    if "nx" in m:
        mesh.nx = _int(m, "nx")
    if "ny" in m:
        mesh.ny = _int(m, "ny")
    if mesh.nx < 1 or mesh.ny < 1:
        raise ConfigError("mesh resolution must be at least 1", "nx" if mesh.nx < 1 else "ny")
    if "extents" in m:
        try:
            ext = tuple(float(v) for v in m["extents"].split(","))
        except ValueError:
            raise ConfigError("expected four numbers", "extents") from None
        if len(ext) != 4 or not (ext[1] > ext[0] and ext[3] > ext[2]):
            raise ConfigError("expected xmin, xmax, ymin, ymax with positive widths", "extents")
        mesh.extents = ext
    for side in ("left", "right", "bottom", "top"):
        if side in m:
            mesh.tagging[side] = _tag(side, m[side])
    if "drained" in m:
        mesh.drained = tuple(Tag[_tag("drained", v)] for v in m["drained"].split(",") if v.strip())
    if "file" in m:
        path = Path(m["file"])
        path = path if path.is_absolute() else base / path
        if not path.is_file():
            raise ConfigError(f"mesh file {str(path)!r} does not exist", "file")
        mesh.file = path

    # material
    mat = sec["material"]
    for req in ("lam", "G"):
        if req not in mat:
            raise ConfigError("required key is missing from [material]", req)
    kw = {key: _float(mat, key) for key in ("lam", "G", "alpha", "M", "c_f", "phi0", "mu_f", "rho_f_r", "g_grav")
          if key in mat}
    if "k" in mat and any(k in mat for k in ("kxx", "kxy", "kyy")):
        raise ConfigError("give either k or kxx/kxy/kyy, not both", "k")
    if "k" in mat:
        kw["K"] = _float(mat, "k") * np.eye(2)
    elif any(k in mat for k in ("kxx", "kxy", "kyy")):
        kxx = _float(mat, "kxx") if "kxx" in mat else 1.0
        kyy = _float(mat, "kyy") if "kyy" in mat else 1.0
        kxy = _float(mat, "kxy") if "kxy" in mat else 0.0
        kw["K"] = np.array([[kxx, kxy], [kxy, kyy]])
    if "eta" in mat:
        eta = Expression(mat["eta"], ("x", "y"))
        if eta.degree > 1:
            raise ConfigError("elevation must be affine", "eta")
        kw["eta"] = eta
    sol = sec["solver"]
    stab_L = _float(sol, "stab_L") if "stab_L" in sol else None
    if stab_L is not None:
        kw["stab_L"] = stab_L
    try:
        params = MaterialParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), _guess_key(str(exc), kw)) from exc
    if stab_L is not None and params.alpha > 0:
        lower = params.alpha**2 / (2 * params.lam)
        if stab_L <= lower:
            msg = (f"stab_L = {stab_L:g} is not above alpha^2/(2 lam) = {lower:g}; "
                   f"convergence is only guaranteed for stab_L in ({lower:g}, inf)")
            warnings.warn(msg, StabilizationWarning, stacklevel=2)
            notes.append(msg)

    # loads
    ld = sec["loads"]
    xyt, xytn = ("x", "y", "t"), ("x", "y", "t", "nx", "ny")
    expr = {key: Expression(ld[key], xytn if key.startswith("f2") else xyt) for key in ld}
    load_kw = {}
    if "f0_x" in expr or "f0_y" in expr:
        load_kw["f0"] = _pair(expr.get("f0_x", Expression("0")), expr.get("f0_y", Expression("0")))
    if "f2_x" in expr or "f2_y" in expr:
        load_kw["f2"] = _pair(expr.get("f2_x", Expression("0", xytn)), expr.get("f2_y", Expression("0", xytn)))
    if "q" in expr:
        load_kw["q"] = expr["q"]
    if "gap" in expr:
        load_kw["gap"] = expr["gap"]
    loads = Loads(**load_kw)

    initial = {key: Expression(val, ("x", "y")) for key, val in sec["initial"].items()}

    # time
    tm = sec["time"]
    for req in ("dt", "T"):
        if req not in tm:
            raise ConfigError("required key is missing from [time]", req)
    dt, T = _float(tm, "dt"), _float(tm, "T")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"time step must be positive, got {dt:g}", "dt")
    if not T >= dt * (1 - 1e-12):
        raise ConfigError(f"final time must be at least dt, got T = {T:g}", "T")
    if abs(T / dt - round(T / dt)) > 1e-9 * (T / dt):
        raise ConfigError("final time must be an integer multiple of dt", "T")

    cfg = SolverConfig(mesh=mesh, params=params, loads=loads, dt=dt, T=T, initial=initial,
                       stab_L=stab_L, source_text=text, warnings=notes)
    if "tol" in sol:
        cfg.tol = _float(sol, "tol")
        if not cfg.tol > 0:
            raise ConfigError("tolerance must be positive", "tol")
    if "floor" in sol:
        cfg.floor = _float(sol, "floor")
        if not cfg.floor > 0:
            raise ConfigError("floor must be positive", "floor")
    if "max_iters" in sol:
        cfg.max_iters = _int(sol, "max_iters")
        if cfg.max_iters < 1:
            raise ConfigError("must be at least 1", "max_iters")
    if "contact_c" in sol:
        cfg.contact_c = _float(sol, "contact_c")
        if not cfg.contact_c > 0:
            raise ConfigError("must be positive", "contact_c")
    if "max_as_iters" in sol:
        cfg.max_as_iters = _int(sol, "max_as_iters")

    out = sec["output"]
    if "dir" in out:
        d = Path(out["dir"])
        cfg.output_dir = d if d.is_absolute() else base / d
    else:
        cfg.output_dir = base / "out"
    if "vtk_every" in out:
        cfg.vtk_every = _int(out, "vtk_every")
        if cfg.vtk_every < 0:
            raise ConfigError("must be nonnegative", "vtk_every")
    if "mode" in out:
        if out["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}", "mode")
        cfg.mode = out["mode"]

    for key, raw in sec["sweep"].items():
        try:
            vals = [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("expected comma separated numbers", key) from None
        if not vals:
            raise ConfigError("empty value list", key)
        cfg.sweep[key] = vals
    return cfg


def _guess_key(message: str, kw: dict) -> Optional[str]:
    for key in sorted(kw, key=len, reverse=True):
        if key in message:
            return key
    return None


def load_config(path: os.PathLike) -> SolverConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    return parse_config(text, base_dir=path.parent)
