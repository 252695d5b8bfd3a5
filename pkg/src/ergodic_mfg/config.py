"""Scenario documents (TOML) and their translation into solver objects.

A scenario has the tables ``[grid]``, ``[model]``, ``[controls]``,
``[coupling]`` (with optional ``[coupling.kernel]``), ``[solver]`` and
``[outputs]``.  See the files under ``scenarios/`` for complete examples.
Every error names the offending field, e.g. ``model.rate: expected a number``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .coupling import (
    ComposedConvolution,
    Convolution,
    CouplingSpec,
    Kernel,
    LocalPower,
    constant_cost,
    constant_kernel,
    gaussian_kernel,
    odd_gaussian_kernel,
    quadratic_cost,
    tabulated_kernel,
)
from .errors import ConfigError
from .grid import CoefficientModel, ControlSet, GridSpec, linear_control_model, ou_model, tabulated_model
from .primal import SolverConfig

ARTIFACTS = ("q", "u", "alpha", "diagnostics", "trace")


@dataclass
class ScenarioConfig:
    name: str
    grid: GridSpec
    model: CoefficientModel
    controls: ControlSet
    coupling: CouplingSpec
    solver: SolverConfig
    output_dir: Path | None = None
    artifacts: tuple[str, ...] = ARTIFACTS
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)


# ----------------------------------------------------------------------------
# small typed accessors


class _Table:
    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def _where(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key) -> bool:
        return key in self.data

    def raw(self, key, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"{self._where(key)}: required field missing")
            return default
        self.used.add(key)
        return self.data[key]

    def number(self, key, default=...) -> float:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._where(key)}: expected a number, got {v!r}")
        return float(v)

    def integer(self, key, default=...) -> int:
        v = self.raw(key, default)
        if v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._where(key)}: expected an integer, got {v!r}")
        return v

    def string(self, key, default=..., choices=None) -> str:
        v = self.raw(key, default)
        if not isinstance(v, str):
            raise ConfigError(f"{self._where(key)}: expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(f"{self._where(key)}: must be one of {sorted(choices)}, got {v!r}")
        return v

    def numbers(self, key, default=..., length=None) -> list[float]:
        v = self.raw(key, default)
        if not isinstance(v, list) or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in v):
            raise ConfigError(f"{self._where(key)}: expected a list of numbers, got {v!r}")
        if length is not None and len(v) != length:
            raise ConfigError(f"{self._where(key)}: expected {length} entries, got {len(v)}")
        return [float(e) for e in v]

    def sub(self, key, required=True) -> "_Table | None":
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._where(key)}: required table missing")
            return None
        self.used.add(key)
        return _Table(self.data[key], self._where(key))

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self._where(extra[0])}: unknown field")


# ----------------------------------------------------------------------------
# sections


def _grid(t: _Table) -> GridSpec:
    bounds = t.raw("bounds")
    if not isinstance(bounds, list) or not bounds:
        raise ConfigError("grid.bounds: expected a list of [lo, hi] pairs")
    pairs = []
    for k, b in enumerate(bounds):
        if not isinstance(b, list) or len(b) != 2 or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in b):
            raise ConfigError(f"grid.bounds[{k}]: expected [lo, hi]")
        pairs.append((float(b[0]), float(b[1])))
    counts = t.raw("counts")
    if not isinstance(counts, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in counts):
        raise ConfigError("grid.counts: expected a list of integers")
    t.finish()
    try:
        return GridSpec(tuple(pairs), tuple(counts))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _model(t: _Table, dim: int) -> CoefficientModel:
    family = t.string("family", choices={"ou", "linear_control", "tabulated"})
    d = t.number("moment_order", 2.0)
    if family == "ou":
        m = ou_model(dim, t.number("rate", 1.0), t.number("diffusion", 1.0), d)
    elif family == "linear_control":
        m = linear_control_model(
            dim, t.number("rate", 1.0), t.number("diffusion", 1.0), t.number("gain", 1.0), t.number("control_bound", 1.0), d
        )
    else:
        if dim != 1:
            raise ConfigError("model.family: tabulated models are one-dimensional")
        xs = t.numbers("xs")
        try:
            m = tabulated_model(
                xs,
                t.numbers("drift", length=len(xs)),
                t.numbers("diffusion_values", length=len(xs)),
                t.number("gain", 0.0),
                moment_order=d,
            )
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc
    overrides = {}
    if t.has("ellipticity_bounds"):
        overrides["ellipticity_bounds"] = tuple(t.numbers("ellipticity_bounds", length=2))
    if t.has("confinement"):
        overrides["confinement"] = tuple(t.numbers("confinement", length=3))
    if t.has("growth"):
        overrides["growth"] = tuple(t.numbers("growth", length=2))
    t.finish()
    if overrides:
        m = replace(m, **overrides)
    theta = m.growth[1]
    if not 0 <= theta <= m.moment_order:
        raise ConfigError(f"model.growth: theta={theta} must lie in [0, moment_order={m.moment_order}]")
    return m


def _controls(t: _Table, dim: int) -> ControlSet:
    try:
        if t.has("points"):
            pts = t.raw("points")
            if not isinstance(pts, list) or not pts:
                raise ConfigError("controls.points: expected a non-empty list")
            arr = np.asarray(pts, dtype=float)
            cs = ControlSet(arr.reshape(len(pts), -1))
        else:
            lo, hi = t.numbers("range", length=2)
            cs = ControlSet.uniform(lo, hi, t.integer("count"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"controls: {exc}") from exc
    t.finish()
    return cs


def _kernel(t: _Table) -> Kernel:
    kind = t.string("type", choices={"gaussian", "constant", "odd_gaussian", "tabulated"})
    if kind == "gaussian":
        k = gaussian_kernel(t.number("amplitude", -1.0), t.number("width", 1.0))
    elif kind == "odd_gaussian":
        k = odd_gaussian_kernel(t.number("amplitude", -1.0), t.number("width", 1.0))
    elif kind == "constant":
        k = constant_kernel(t.number("value", -1.0))
    else:
        zs = t.numbers("zs")
        k = tabulated_kernel(zs, t.numbers("values", length=len(zs)))
    t.finish()
    return k


_OUTER = {
    # name: (F(s), dF/ds)
    "square": (lambda x, a, s: s**2 / 2, lambda x, a, s: s),
    "cube": (lambda x, a, s: s**3 / 3, lambda x, a, s: s**2),
    "exp": (lambda x, a, s: np.exp(s), lambda x, a, s: np.exp(s)),
}


def _coupling(t: _Table, model: CoefficientModel) -> CouplingSpec:
    base = t.string("base", "quadratic", choices={"quadratic", "constant"})
    if base == "quadratic":
        g = quadratic_cost(t.number("x_weight", 1.0), t.number("alpha_weight", 1.0), t.number("offset", 0.0))
    else:
        g = constant_cost(t.number("value"))
    kind = t.string("interaction", "none", choices={"none", "convolution", "composed", "local_power"})
    inter = None
    if kind != "none":
        kt = t.sub("kernel")
        kern = _kernel(kt)
        if kind == "convolution":
            inter = Convolution(kern)
        elif kind == "composed":
            name = t.string("outer", choices=set(_OUTER))
            inter = ComposedConvolution(kern, *_OUTER[name])
        else:
            try:
                inter = LocalPower(t.integer("gamma", 3), kern)
            except ValueError as exc:
                raise ConfigError(f"coupling.gamma: {exc}") from exc
    order = t.number("growth_order", 2.0)
    if order > model.moment_order:
        raise ConfigError(f"coupling.growth_order: {order} exceeds model.moment_order={model.moment_order}")
    t.finish()
    return CouplingSpec(g, inter, order, name=kind)


def _solver(t: _Table | None) -> SolverConfig:
    if t is None:
        return SolverConfig()
    kw = {}
    for key in ("damping", "fp_tolerance"):
        if t.has(key):
            kw[key] = t.number(key)
    for key in ("max_outer_iterations", "anchor_node", "oracle_max_nodes", "oracle_max_controls"):
        if t.has(key):
            kw[key] = t.integer(key)
    if t.has("tie_break"):
        kw["tie_break"] = t.string("tie_break", choices={"lowest-index"})
    if t.has("scheme"):
        kw["scheme"] = t.string("scheme", choices={"hybrid", "upwind", "central"})
    t.finish()
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc


def parse_scenario(data: dict, source: Path | None = None) -> ScenarioConfig:
    top = _Table(data, "")
    name = top.string("name", source.stem if source else "scenario")
    grid = _grid(top.sub("grid"))
    model = _model(top.sub("model"), grid.dim)
    controls = _controls(top.sub("controls"), grid.dim)
    if model.name == "linear_control" and controls.k != grid.dim:
        raise ConfigError(f"controls: linear_control needs {grid.dim}-dimensional control points, got {controls.k}")
    coupling = _coupling(top.sub("coupling"), model)
    solver = _solver(top.sub("solver", required=False))
    if solver.anchor_node is not None and not 0 <= solver.anchor_node < grid.size:
        raise ConfigError(f"solver.anchor_node: {solver.anchor_node} outside 0..{grid.size - 1}")
    out = top.sub("outputs", required=False)
    out_dir, artifacts = None, ARTIFACTS
    if out is not None:
        if out.has("directory"):
            d = Path(out.string("directory"))
            out_dir = d if d.is_absolute() or source is None else source.parent / d
        if out.has("artifacts"):
            arts = out.raw("artifacts")
            if not isinstance(arts, list) or any(a not in ARTIFACTS for a in arts):
                raise ConfigError(f"outputs.artifacts: entries must be among {list(ARTIFACTS)}")
            artifacts = tuple(arts)
        out.finish()
    top.finish()
    return ScenarioConfig(name, grid, model, controls, coupling, solver, out_dir, artifacts, source, data)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_scenario(data, path)
