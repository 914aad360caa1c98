"""Scenario files: YAML with sections species, grid, time, initial, matrix, solver.

Example::

    species: {m: [1, 2, 3], mu: 1.0, nu: 0.0}
    parameters: {amp: 0.01}
    grid: {N: 128}
    time: {T: 0.05, dt: 0.00125}
    initial:
      a1: 0.5
      a2: 1.5
      rho: ["1 + amp*cos(pi*x)", "0.8", "0.6 - amp*cos(pi*x)"]
      u: "0"
    matrix: {kind: exemplary}
    solver: {theta: 1.0, abs_tol: 1.0e-9}
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .algebra import ExemplaryFlux, FluxModel, projected_flux
from .errors import CompatibilityError, InvalidParameters, ParseError, ValidationError
from .expr import ExpressionError, compile_expression
from .grid import Grid
from .mixture import PrimitiveState, SpeciesParams

SECTIONS = {"species", "parameters", "grid", "time", "initial", "matrix", "solver"}
SOLVER_DEFAULTS = {
    "theta": 1.0,
    "abs_tol": 1e-9,
    "res_tol": 1e-8,
    "max_iter": 50,
    "delta": 0.1,
    "p": 2.0,
    "q": 2.0,
    "bc_form": "weighted",
    "T_min": 1e-4,
    "compat_tol": 1e-8,
}
DEFAULT_N = 64
DEFAULT_T = 0.05
DEFAULT_STEPS = 40


@dataclass
class Scenario:
    params: SpeciesParams
    N: int
    T: float
    dt: float
    rho_init: list
    u_init: object
    a1: float
    a2: float
    matrix_kind: str = "exemplary"
    matrix_table: np.ndarray | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    parameters: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> Grid:
        return Grid(self.N)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def _field(self, spec, name):
        g = self.grid
        if isinstance(spec, str):
            return compile_expression(spec, self.parameters)(g.y, **self.parameters)
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            return np.full(g.M, float(arr))
        if arr.shape != (g.M,):
            raise ValidationError("initial", "length")
        return arr

    def initial_state(self) -> PrimitiveState:
        rho = np.stack([self._field(s, "rho") for s in self.rho_init], axis=-1)
        u = self._field(self.u_init, "u")
        return PrimitiveState(rho, u)

    def flux_model(self) -> FluxModel:
        if self.matrix_kind == "exemplary":
            return ExemplaryFlux()
        return projected_flux(self.matrix_table)

    def problem(self):
        from .picard import Problem

        s = self.solver
        return Problem(
            params=self.params,
            grid=self.grid,
            initial=self.initial_state(),
            T=self.T,
            dt=self.dt,
            theta=float(s["theta"]),
            delta=float(s["delta"]),
            p=float(s["p"]),
            q=float(s["q"]),
            flux_model=self.flux_model(),
            bc_form=s["bc_form"],
            a1=self.a1,
            a2=self.a2,
            abs_tol=float(s["abs_tol"]),
            res_tol=float(s["res_tol"]),
            max_iter=int(s["max_iter"]),
            T_min=float(s["T_min"]),
            compat_tol=float(s["compat_tol"]),
        )


def config_hash(mapping) -> str:
    """sha256 of the canonical JSON form, so formatting and comments do not matter."""
    text = json.dumps(mapping, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def parse_text(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(mark.line + 1 if mark else 0, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ParseError(0, str(exc)) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(1, "top level must be a mapping")
    return data


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError("path", f"cannot read {path}: {exc.strerror}") from None
    return scenario_from_mapping(parse_text(text), base_dir=path.parent)


def _section(data, name):
    sec = data.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ValidationError(name, "must be a mapping")
    return sec


def _number(value, name, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, "must be a number")
    if integer and int(value) != value:
        raise ValidationError(name, "must be an integer")
    if positive and not value > 0:
        raise ValidationError(name, "must be positive")
    return int(value) if integer else float(value)


def scenario_from_mapping(data: dict, base_dir=None) -> Scenario:
    data = copy.deepcopy(data)
    unknown = set(data) - SECTIONS
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown section")

    species = _section(data, "species")
    if "m" not in species:
        raise ValidationError("m", "required")
    m = species["m"]
    if not isinstance(m, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in m):
        raise ValidationError("m", "must be a list of numbers")
    if len(m) < 2:
        raise ValidationError("m", "at least two species are required")
    if "n" in species and species["n"] != len(m):
        raise ValidationError("n", "does not match the number of molar masses")
    if any(v <= 0 for v in m):
        raise ValidationError("m", "must be positive")
    mu = _number(species.get("mu", 1.0), "mu")
    nu = _number(species.get("nu", 0.0), "nu")
    try:
        params = SpeciesParams(m, mu, nu)
    except InvalidParameters as exc:
        raise ValidationError("species", str(exc)) from None

    parameters = _section(data, "parameters")
    for key, val in parameters.items():
        _number(val, f"parameters.{key}")

    N = _number(_section(data, "grid").get("N", DEFAULT_N), "N", positive=True, integer=True)
    if N < 4:
        raise ValidationError("N", "at least 4 interior points are required")

    time = _section(data, "time")
    T = _number(time.get("T", DEFAULT_T), "T", positive=True)
    dt = _number(time.get("dt", T / DEFAULT_STEPS), "dt", positive=True)
    if dt > T:
        raise ValidationError("dt", "must not exceed T")

    initial = _section(data, "initial")
    for key in ("rho", "a1", "a2"):
        if key not in initial:
            raise ValidationError(f"initial.{key}", "required")
    a1 = _number(initial["a1"], "a1", positive=True)
    a2 = _number(initial["a2"], "a2", positive=True)
    if a2 < a1:
        raise ValidationError("a2", "must be at least a1")
    rho_init = initial["rho"]
    if not isinstance(rho_init, list) or len(rho_init) != len(m):
        raise ValidationError("initial.rho", f"needs one entry per species ({len(m)})")
    u_init = initial.get("u", "0")

    matrix = _section(data, "matrix")
    kind = matrix.get("kind", "exemplary")
    table = None
    if kind == "table":
        table = _load_table(matrix, base_dir, len(m))
    elif kind != "exemplary":
        raise ValidationError("matrix.kind", "must be exemplary or table")

    solver = dict(SOLVER_DEFAULTS)
    for key, val in _section(data, "solver").items():
        if key not in SOLVER_DEFAULTS:
            raise ValidationError(f"solver.{key}", "unknown setting")
        solver[key] = val
    if solver["bc_form"] not in ("weighted", "reduced"):
        raise ValidationError("solver.bc_form", "must be weighted or reduced")
    for key in ("abs_tol", "res_tol", "delta", "p", "q", "T_min", "compat_tol"):
        _number(solver[key], f"solver.{key}", positive=True)
    theta = _number(solver["theta"], "solver.theta")
    if not 0.5 <= theta <= 1.0:
        raise ValidationError("solver.theta", "must lie in [0.5, 1]")
    _number(solver["max_iter"], "solver.max_iter", positive=True, integer=True)

    sc = Scenario(params, N, T, dt, rho_init, u_init, a1, a2, kind, table, solver, dict(parameters), data)
    _validate_initial(sc)
    return sc


def _load_table(matrix, base_dir, n):
    if "path" not in matrix:
        raise ValidationError("matrix.path", "required for kind table")
    path = Path(matrix["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    try:
        if path.suffix == ".json":
            table = np.asarray(json.loads(path.read_text()), dtype=float)
        else:
            table = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError("matrix.path", f"cannot read table: {exc}") from None
    if table.shape != (n, n):
        raise ValidationError("matrix.path", f"table must be {n}x{n}")
    try:
        projected_flux(table)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValidationError("matrix.path", f"table rejected: {exc}") from None
    return table


def _validate_initial(sc: Scenario):
    from .picard.driver import check_compatibility

    try:
        state = sc.initial_state()
    except ExpressionError as exc:
        raise ValidationError("initial", str(exc)) from None
    if not np.all(np.isfinite(state.rho_k)) or not np.all(np.isfinite(state.u)):
        raise ValidationError("initial", "non-finite values")
    lo, hi = float(state.rho_k.min()), float(state.rho_k.max())
    if lo < sc.a1 or hi > sc.a2:
        raise ValidationError("initial", f"densities span [{lo:.6g}, {hi:.6g}], outside [a1, a2]")
    try:
        check_compatibility(sc.problem())
    except CompatibilityError as exc:
        raise ValidationError("initial", f"compatibility: {exc}") from None


def set_dotted(mapping: dict, key: str, value):
    """Set ``a.b.c`` in a nested mapping, creating sections as needed."""
    parts = key.split(".")
    node = mapping
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
