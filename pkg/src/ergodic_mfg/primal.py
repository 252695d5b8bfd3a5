"""Primal side: minimise <f(., alpha(.), mu_alpha), mu_alpha> over control fields.

The solver is a damped fixed point.  For the current (q, alpha) it prices the
field with a Poisson solve, improves alpha node by node (the minimisation over
fields splits into independent minimisations at each node once q is frozen)
and relaxes q toward the invariant measure of the new field.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingSpec, cost_table, field_costs
from .dual import (
    IterationRecord,
    SolutionTriple,
    ValueFunction,
    certify,
    hamiltonian_table,
    solve_poisson,
)
from .errors import ErgodicMFGError, LimitExceeded, NonConvergence
from .grid import CoefficientModel, ControlField, ControlSet, DiscreteGenerator, GridSpec, build_generator, control_generators
from .stationary import DiscreteMeasure, stationary_measure, tv_distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.5
    max_outer_iterations: int = 500
    fp_tolerance: float = 1e-10
    tie_break: str = "lowest-index"
    anchor_node: int | None = None  # None: node nearest the box centre
    oracle_max_nodes: int = 8
    oracle_max_controls: int = 3
    scheme: str = "hybrid"

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if not self.fp_tolerance > 0:
            raise ValueError("fp_tolerance must be positive")
        if self.tie_break != "lowest-index":
            raise ValueError(f"unsupported tie_break rule {self.tie_break!r}")
        if self.oracle_max_nodes < 1 or self.oracle_max_controls < 1:
            raise ValueError("oracle limits must be positive")
        if self.scheme not in ("hybrid", "upwind", "central"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def pointwise_argmin(
    u: ValueFunction,
    q: DiscreteMeasure,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    spec: CouplingSpec,
    generators: list[DiscreteGenerator] | None = None,
    scheme: str = "hybrid",
) -> ControlField:
    """Node-wise minimiser of -(L_a u)(x_i) + f(x_i, a, q); ties go to the lowest control index."""
    V = hamiltonian_table(u, q, grid, model, controls, spec, generators, scheme)
    return ControlField(np.argmin(V, axis=1), len(controls))


def primal_objective(
    field: ControlField,
    spec: CouplingSpec,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    scheme: str = "hybrid",
) -> float:
    """F(alpha): the payoff evaluated at, and averaged against, the measure alpha induces."""
    mu = stationary_measure(build_generator(grid, model, field, controls, scheme))
    return float(field_costs(spec, grid, controls, field, mu) @ mu.weights)


def _check_limits(grid: GridSpec, controls: ControlSet, max_nodes: int, max_controls: int) -> None:
    if grid.size > max_nodes or len(controls) > max_controls:
        raise LimitExceeded(
            f"enumeration needs N <= {max_nodes} and |A| <= {max_controls}; got N={grid.size}, |A|={len(controls)}"
        )


def brute_force_primal(
    spec: CouplingSpec,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    limits: tuple[int, int] = (8, 3),
    scheme: str = "hybrid",
) -> tuple[ControlField, DiscreteMeasure, float]:
    """Exhaustive search over all |A|^N fields.

    Fields are visited in lexicographic order and only a strictly smaller
    objective replaces the incumbent, so the lexicographically smallest of
    several equal minimisers is returned.
    """
    _check_limits(grid, controls, *limits)
    best = None
    for idx in itertools.product(range(len(controls)), repeat=grid.size):
        fld = ControlField(np.array(idx), len(controls))
        mu = stationary_measure(build_generator(grid, model, fld, controls, scheme))
        val = float(field_costs(spec, grid, controls, fld, mu) @ mu.weights)
        if best is None or val < best[2]:
            best = (fld, mu, val)
    return best


def enumerated_minimum_fixed_q(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, q: DiscreteMeasure, max_nodes: int = 8, max_controls: int = 3) -> float:
    """min over every field of <f(., alpha(.), q), q> with q frozen, by enumeration."""
    _check_limits(grid, controls, max_nodes, max_controls)
    table = cost_table(spec, grid, controls, q)
    rows = np.arange(grid.size)
    best = np.inf
    for idx in itertools.product(range(len(controls)), repeat=grid.size):
        best = min(best, float(table[rows, idx] @ q.weights))
    return best


def pointwise_minimum_integral(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, q: DiscreteMeasure) -> float:
    """sum_i min_a f(x_i, a, q) q_i."""
    return float(cost_table(spec, grid, controls, q).min(axis=1) @ q.weights)


def _price(L, spec, grid, controls, field, q, mu, anchor):
    """(c, u) for the field with payoffs frozen at q; c averages against mu so the Poisson system is solvable."""
    f_vec = field_costs(spec, grid, controls, field, q)
    c = float(f_vec @ mu.weights)
    return c, solve_poisson(L, f_vec, c, mu, anchor)


def solve_mfg(
    spec: CouplingSpec,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    cfg: SolverConfig | None = None,
) -> SolutionTriple:
    cfg = cfg or SolverConfig()
    scheme = cfg.scheme
    anchor = grid.center_node if cfg.anchor_node is None else int(cfg.anchor_node)
    if not 0 <= anchor < grid.size:
        raise ValueError(f"anchor node {anchor} outside the grid")
    gens = control_generators(grid, model, controls, scheme)
    # without interaction f ignores q, so relaxing q only delays the exit
    lam = 1.0 if spec.interaction is None else cfg.damping

    field = ControlField.constant(grid, 0)
    q = DiscreteMeasure.uniform(grid)
    L = build_generator(grid, model, field, controls, scheme)
    mu = stationary_measure(L)
    trace: list[IterationRecord] = []

    for it in range(1, cfg.max_outer_iterations + 1):
        c, u = _price(L, spec, grid, controls, field, q, mu, anchor)
        new_field = pointwise_argmin(u, q, grid, model, controls, spec, gens, scheme)
        changes = int(np.count_nonzero(new_field.indices != field.indices))
        if changes:
            field = new_field
            L = build_generator(grid, model, field, controls, scheme)
            mu = stationary_measure(L)
        w = mu.weights if lam == 1.0 else (1.0 - lam) * q.weights + lam * mu.weights
        q = DiscreteMeasure(w / w.sum(), grid)
        tv = tv_distance(q, mu)
        trace.append(IterationRecord(it, tv, c, changes))
        log.debug("%d, %.6e, %.17g, %d", it, tv, c, changes)

        if changes == 0 and tv <= cfg.fp_tolerance:
            # finish on the exact invariant measure and re-price there
            q = mu
            c, u = _price(L, spec, grid, controls, field, q, mu, anchor)
            check = pointwise_argmin(u, q, grid, model, controls, spec, gens, scheme)
            if check == field:
                sol = SolutionTriple(c, u, q, field, True, it, trace, scheme=scheme)
                sol.diagnostics = certify(sol, spec, grid, model, controls, generators=gens)
                log.info("converged after %d iterations, c = %.12g", it, c)
                return sol

    c, u = _price(L, spec, grid, controls, field, q, mu, anchor)
    sol = SolutionTriple(c, u, q, field, False, cfg.max_outer_iterations, trace, scheme=scheme)
    try:
        sol.diagnostics = certify(sol, spec, grid, model, controls, generators=gens)
    except ErgodicMFGError:  # pragma: no cover - diagnostics are best effort here
        pass
    raise NonConvergence(
        f"no fixed point within {cfg.max_outer_iterations} iterations (last tv residual {trace[-1].tv_residual:.3e})",
        solution=sol,
        trace=trace,
    )


def write_trace_csv(path, trace: list[IterationRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("iter,tv_residual,c,field_changes\n")
        for r in trace:
            fh.write(f"{r.iteration},{r.tv_residual:.17g},{r.c:.17g},{r.field_changes}\n")
