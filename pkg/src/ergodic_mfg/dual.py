"""Dual variables (c, u) and the certificate that a triple (c, u, q, alpha) is optimal.

A solution is certified when, on the grid,

* q is a strictly positive probability vector with q^T L_alpha = 0,
* H_i - c >= 0 at every node, where H_i = min_a {-(L_a u)_i + f(x_i, a, q)},
* sum_i (H_i - c) q_i = 0, which with q > 0 forces H = c node by node,
* the stored control attains the minimum in H at every node,
* the primal value <f(., alpha, q), q> equals the dual value min_i H_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import CouplingSpec, cost_table, field_costs
from .errors import IncompatibleRHS, SingularSystemError
from .grid import CoefficientModel, ControlField, ControlSet, DiscreteGenerator, GridSpec, build_generator, control_generators
from .stationary import DiscreteMeasure, fpk_residual


@dataclass
class ValueFunction:
    values: np.ndarray
    anchor_node: int
    grid: GridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values[self.anchor_node] != 0.0:
            raise ValueError("value function must vanish at its anchor node")

    def growth_constant(self, kappa: float) -> float:
        """Smallest C with |u(x_i)| <= C (1 + |x_i|^kappa) on the grid."""
        r = np.linalg.norm(self.grid.points, axis=1)
        return float(np.max(np.abs(self.values) / (1.0 + r**kappa)))


@dataclass(frozen=True)
class CertificationTolerances:
    fpk_relative: float = 1e-10  # multiplies ||L||_inf
    hjb_gap: float = 1e-6
    slackness: float = 1e-8
    duality_gap: float = 1e-6
    argmin_relative: float = 1e-9  # multiplies 1 + max_j |V_ij| per node


@dataclass
class Diagnostics:
    c: float
    fpk_residual: float
    hjb_min_gap: float
    complementary_slackness: float
    argmin_consistency: float
    duality_gap: float
    growth_C: float
    kappa: float
    verdict: bool
    iterations: int = 0
    witness_node: int = -1
    min_weight: float = 0.0
    failures: list[str] = field(default_factory=list)
    monotonicity: dict | None = None

    def to_dict(self) -> dict:
        """The fixed-key JSON document."""
        return {
            "c": float(self.c),
            "fpk_residual": float(self.fpk_residual),
            "hjb_min_gap": float(self.hjb_min_gap),
            "complementary_slackness": float(self.complementary_slackness),
            "argmin_consistency": float(self.argmin_consistency),
            "duality_gap": float(self.duality_gap),
            "growth_C": float(self.growth_C),
            "kappa": float(self.kappa),
            "verdict": "pass" if self.verdict else "fail",
            "iterations": int(self.iterations),
        }


@dataclass
class IterationRecord:
    iteration: int
    tv_residual: float
    c: float
    field_changes: int


@dataclass
class SolutionTriple:
    c: float
    u: ValueFunction
    q: DiscreteMeasure
    field: ControlField
    converged: bool = True
    iterations: int = 0
    trace: list[IterationRecord] = field(default_factory=list)
    diagnostics: Diagnostics | None = None
    scheme: str = "hybrid"


def ergodic_constant(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, field: ControlField, q: DiscreteMeasure) -> float:
    """c = <f(., alpha(.), q), q>."""
    return float(field_costs(spec, grid, controls, field, q) @ q.weights)


def solve_poisson(L: DiscreteGenerator, f_vec, c: float, q: DiscreteMeasure, anchor: int | None = None) -> ValueFunction:
    """Solve L u = f - c with u[anchor] = 0.

    Solvable because f - c is orthogonal to the invariant measure q (checked),
    which makes one equation redundant.  The equation dropped is the one at the
    node of largest mass: the dropped residual is recovered as <residual, q> / q_r,
    so a node deep in the tail would amplify rounding.  The solution is then
    shifted to vanish at ``anchor``.
    """
    f_vec = np.asarray(f_vec, dtype=float)
    n = L.size
    if f_vec.shape != (n,):
        raise ValueError("right-hand side does not match generator size")
    anchor = L.grid.center_node if anchor is None else int(anchor)
    rhs = f_vec - c
    compat = float(rhs @ q.weights)
    if abs(compat) > 1e-9 * (1.0 + abs(c)):
        raise IncompatibleRHS(f"<f - c, q> = {compat:.3e}; c is not the q-average of f")
    pivot = int(np.argmax(q.weights))
    A = L.matrix.tolil()
    A[pivot, :] = 0.0
    A[pivot, pivot] = 1.0
    b = rhs.copy()
    b[pivot] = 0.0
    try:
        u = spla.spsolve(sp.csc_matrix(A), b)
    except RuntimeError as exc:
        raise SingularSystemError(f"Poisson solve failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("Poisson solve produced non-finite values")
    u = u - u[anchor]
    residual = float(np.abs(L.matrix @ u - rhs).max())
    scale = max(float(np.abs(f_vec).max()), abs(c), 1.0)
    if residual > 1e-9 * scale:
        raise SingularSystemError(f"Poisson residual {residual:.3e} exceeds tolerance")
    return ValueFunction(u, anchor, L.grid)


def hamiltonian_table(
    u: ValueFunction,
    q: DiscreteMeasure,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    spec: CouplingSpec,
    generators: list[DiscreteGenerator] | None = None,
    scheme: str = "hybrid",
) -> np.ndarray:
    """V[i, j] = -(L_{alpha_j} u)(x_i) + f(x_i, alpha_j, q)."""
    if generators is None:
        generators = control_generators(grid, model, controls, scheme)
    Lu = np.stack([G.matrix @ u.values for G in generators], axis=1)
    return -Lu + cost_table(spec, grid, controls, q)


def hamiltonian_field(u, q, grid, model, controls, spec, generators=None, scheme="hybrid") -> np.ndarray:
    """H_i = min over control points of -(L_a u)(x_i) + f(x_i, a, q)."""
    return hamiltonian_table(u, q, grid, model, controls, spec, generators, scheme).min(axis=1)


def certify(
    solution: SolutionTriple,
    spec: CouplingSpec,
    grid: GridSpec,
    model: CoefficientModel,
    controls: ControlSet,
    tolerances: CertificationTolerances | None = None,
    generators: list[DiscreteGenerator] | None = None,
) -> Diagnostics:
    tol = tolerances or CertificationTolerances()
    scheme = solution.scheme
    c, u, q, fld = solution.c, solution.u, solution.q, solution.field
    L = build_generator(grid, model, fld, controls, scheme)

    fpk = fpk_residual(q, L)
    V = hamiltonian_table(u, q, grid, model, controls, spec, generators, scheme)
    H = V.min(axis=1)
    gap = H - c
    witness = int(np.argmin(gap))
    hjb_min_gap = float(gap[witness])
    slackness = float(gap @ q.weights)

    stored = V[np.arange(grid.size), fld.indices]
    node_tol = tol.argmin_relative * (1.0 + np.abs(V).max(axis=1))
    consistent = stored <= H + node_tol
    argmin_consistency = float(consistent.mean())

    primal = float(field_costs(spec, grid, controls, fld, q) @ q.weights)
    dual = c + hjb_min_gap
    duality_gap = abs(primal - dual)

    kappa = model.moment_order + 1.0 - model.growth[1]
    growth_C = u.growth_constant(kappa)

    failures = []
    if fpk > tol.fpk_relative * L.norm_inf():
        failures.append(f"fpk_residual {fpk:.3e}")
    if hjb_min_gap < -tol.hjb_gap:
        failures.append(f"hjb_min_gap {hjb_min_gap:.3e} at node {witness}")
    if slackness > tol.slackness:
        worst = int(np.argmax(gap * q.weights))
        failures.append(f"complementary_slackness {slackness:.3e} (largest term at node {worst})")
        if hjb_min_gap >= -tol.hjb_gap:
            witness = worst
    if argmin_consistency < 1.0:
        bad = int(np.flatnonzero(~consistent)[0])
        failures.append(f"argmin_consistency {argmin_consistency:.6f} (first bad node {bad})")
    if duality_gap > tol.duality_gap:
        failures.append(f"duality_gap {duality_gap:.3e}")
    if not q.is_strictly_positive:
        failures.append("invariant measure not strictly positive")
    if not np.all(np.isfinite([fpk, hjb_min_gap, slackness, duality_gap, growth_C])):
        failures.append("non-finite residual")

    return Diagnostics(
        c=float(c),
        fpk_residual=fpk,
        hjb_min_gap=hjb_min_gap,
        complementary_slackness=slackness,
        argmin_consistency=argmin_consistency,
        duality_gap=duality_gap,
        growth_C=growth_C,
        kappa=kappa,
        verdict=not failures,
        iterations=solution.iterations,
        witness_node=witness,
        min_weight=float(q.weights.min()),
        failures=failures,
    )


def uniqueness_check(u1: ValueFunction, u2: ValueFunction) -> float:
    """Deviation of u1 - u2 from a constant: max_i |d_i - mean(d)|."""
    if u1.grid != u2.grid:
        raise ValueError("value functions live on different grids")
    d = u1.values - u2.values
    return float(np.abs(d - d.mean()).max())
