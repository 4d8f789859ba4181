"""Scenario files: one TOML document describing fields, drivers, grid and tasks.

Example::

    x0 = [1.0]

    [dimensions]
    d = 1
    m = 1
    n = 1

    [grid]
    T = 1.0
    N = 1024

    [fields.b]
    name = "zero"
    [fields.sigma]
    name = "linear"
    matrix = [0.3]
    [fields.beta]
    name = "zero"

    [driver]
    kind = "fbm"
    hurst = 0.45
    seed = 7

    [brownian]
    seed = 1

    [tasks.density]
    trials = 1000
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InvalidArgument
from .fields import FIELD_NAMES, VectorFieldSet, build_field
from .grid import NoiseSpec, SampledPath, TimeGrid, generate_brownian
from .roughpath import RoughPath, canonical_lift
from .rsde import DIVERGENCE_GUARD

TASKS = ("simulate", "malliavin", "hormander", "roughness", "density", "norris", "residuals")

_TOP_KEYS = {"x0", "dimensions", "grid", "fields", "driver", "brownian", "solver", "tasks", "name"}
_SECTION_KEYS = {
    "dimensions": {"d", "m", "n"},
    "grid": {"T", "N"},
    "driver": {"kind", "hurst", "seed", "formula", "dim", "alpha"},
    "brownian": {"seed"},
    "solver": {"divergence_guard"},
}
_TASK_KEYS = {
    "simulate": {"t_index"},
    "malliavin": {"t_index", "theta_count", "inverse"},
    "hormander": {"max_level", "variant", "point"},
    "roughness": {"theta", "eps", "directions"},
    "density": {"trials", "bandwidth", "t_index", "points", "tail_eps", "malliavin",
                "resample_driver"},
    "norris": {"theta", "eps", "directions", "tolerance"},
    "residuals": {"strides", "p", "integrals"},
}


class ScenarioError(InvalidArgument):
    """Validation failure carrying every problem found."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Scenario:
    d: int
    m: int
    n: int
    fields: Dict[str, Dict[str, Any]]
    x0: np.ndarray
    grid: TimeGrid
    driver: NoiseSpec
    alpha: float
    brownian_seed: int
    guard: float = DIVERGENCE_GUARD
    tasks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    source: str = ""

    @property
    def config_sha256(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    def vector_fields(self) -> VectorFieldSet:
        made = {}
        shapes = {"b": (self.d,), "sigma": (self.d, self.m), "beta": (self.d, self.n)}
        for key, shape in shapes.items():
            spec = self.fields[key]
            params = {k: v for k, v in spec.items() if k != "name"}
            made[key] = build_field(spec["name"], params, self.d, shape)
        return VectorFieldSet(made["b"], made["sigma"], made["beta"])

    def driver_path(self, seed: Optional[int] = None) -> SampledPath:
        spec = self.driver if seed is None else replace(self.driver, seed=int(seed))
        return spec.sample(self.grid)

    def rough_path(self, seed: Optional[int] = None) -> RoughPath:
        return canonical_lift(self.driver_path(seed), self.alpha)

    def brownian(self, seed: Optional[int] = None) -> SampledPath:
        return generate_brownian(self.grid, self.m, self.brownian_seed if seed is None else seed)

    def task(self, name: str) -> Dict[str, Any]:
        return dict(self.tasks.get(name, {}))

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, brownian_seed=int(seed))


def _int(value, where, errors, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{where} must be an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        errors.append(f"{where} must be >= {minimum}, got {value}")
        return None
    return value


def _section(doc, name, errors, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            errors.append(f"missing section [{name}]")
        return {}
    if not isinstance(sec, dict):
        errors.append(f"[{name}] must be a table")
        return {}
    for key in sec:
        if key not in _SECTION_KEYS.get(name, set()):
            errors.append(f"unknown key '{name}.{key}'")
    return sec


def parse_scenario_text(text: str) -> Scenario:
    """Validate a scenario document, reporting every problem at once."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        if "overwrite" in msg or "twice" in msg:
            msg = f"duplicate key: {msg}"
        raise ScenarioError([f"TOML error: {msg}"]) from None
    errors: List[str] = []
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append(f"unknown key '{key}'")

    dims = _section(doc, "dimensions", errors)
    d = _int(dims.get("d"), "dimensions.d", errors, 1) if "d" in dims else None
    m = _int(dims.get("m"), "dimensions.m", errors, 1) if "m" in dims else None
    n = _int(dims.get("n"), "dimensions.n", errors, 1) if "n" in dims else None
    for k in ("d", "m", "n"):
        if k not in dims:
            errors.append(f"missing key 'dimensions.{k}'")

    g = _section(doc, "grid", errors)
    grid = None
    try:
        grid = TimeGrid(float(g["T"]), int(g["N"]))
    except KeyError as exc:
        errors.append(f"missing key 'grid.{exc.args[0]}'")
    except (InvalidArgument, TypeError, ValueError) as exc:
        errors.append(f"invalid grid: {exc}")

    x0 = None
    if "x0" not in doc:
        errors.append("missing key 'x0'")
    else:
        x0 = np.atleast_1d(np.asarray(doc["x0"], dtype=float))
        if d is not None and x0.shape != (d,):
            errors.append(f"x0/state dimension mismatch: x0 has {x0.size} entries but d = {d}")

    fields = doc.get("fields", {})
    for key in fields:
        if key not in ("b", "sigma", "beta"):
            errors.append(f"unknown key 'fields.{key}'")
    for key in ("b", "sigma", "beta"):
        spec = fields.get(key)
        if spec is None:
            errors.append(f"missing section [fields.{key}]")
        elif spec.get("name") not in FIELD_NAMES:
            errors.append(f"fields.{key}: unknown field name {spec.get('name')!r} "
                          f"(library: {', '.join(FIELD_NAMES)})")

    drv = _section(doc, "driver", errors)
    driver = None
    if drv:
        zdim = drv.get("dim", n)
        if n is not None and zdim != n:
            errors.append(f"beta/driver dimension mismatch: beta has n = {n} columns "
                          f"but the driver Z has dimension {zdim}")
        try:
            driver = NoiseSpec(drv.get("kind"), int(zdim or 1), int(drv.get("seed", 0)),
                               drv.get("hurst"), drv.get("formula"))
        except (InvalidArgument, TypeError, ValueError) as exc:
            errors.append(f"invalid driver: {exc}")
    alpha = float(drv.get("alpha", 0.5 if drv.get("kind") != "fbm" else
                          min(0.5, float(drv.get("hurst") or 0.5))))
    if not 1 / 3 < alpha <= 0.5:
        errors.append(f"driver.alpha must lie in (1/3, 1/2], got {alpha}")

    bro = _section(doc, "brownian", errors, required=False)
    seed = bro.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(f"brownian.seed must be a non-negative integer, got {seed!r}")
    sol = _section(doc, "solver", errors, required=False)
    guard = float(sol.get("divergence_guard", DIVERGENCE_GUARD))

    tasks = doc.get("tasks", {})
    for name, block in tasks.items():
        if name not in _TASK_KEYS:
            errors.append(f"unknown key 'tasks.{name}'")
            continue
        for key in block:
            if key not in _TASK_KEYS[name]:
                errors.append(f"unknown key 'tasks.{name}.{key}'")

    scenario = None
    if not errors:
        scenario = Scenario(d, m, n, fields, x0, grid, driver, alpha, seed, guard, tasks, text)
        try:
            scenario.vector_fields()
        except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
            errors.append(f"invalid field parameters: {exc}")
    if errors:
        raise ScenarioError(errors)
    return scenario


def parse_scenario(filename) -> Scenario:
    with open(filename, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_scenario_text(text)
