"""Invariant probability measures of discrete generators, moments and TV distances."""

from __future__ import annotations

import csv

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NegativeMassError, SingularSystemError
from .grid import DiscreteGenerator, GridSpec


class DiscreteMeasure:
    """Probability weights on grid nodes.

    Weights are node masses (already integrated over the cell), so the pairing
    with a node function g is ``g @ weights``.  Densities are ``weights / grid.cell_volume``.
    """

    def __init__(self, weights, grid: GridSpec, check: bool = True):
        w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != grid.size:
            raise ValueError(f"measure has {w.shape[0]} weights, grid has {grid.size} nodes")
        if check:
            if not np.all(np.isfinite(w)):
                raise ValueError("measure weights must be finite")
            if w.min() < -1e-12:
                raise ValueError(f"measure has negative weight {w.min():.3g}")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"measure weights sum to {w.sum():.17g}, not 1")
        w.setflags(write=False)
        self.weights = w
        self.grid = grid

    @classmethod
    def uniform(cls, grid: GridSpec) -> "DiscreteMeasure":
        return cls(np.full(grid.size, 1.0 / grid.size), grid)

    @classmethod
    def point_mass(cls, grid: GridSpec, node: int) -> "DiscreteMeasure":
        w = np.zeros(grid.size)
        w[node] = 1.0
        return cls(w, grid)

    @classmethod
    def from_density(cls, density, grid: GridSpec) -> "DiscreteMeasure":
        """Normalise nonnegative node values of a density into node masses."""
        d = np.asarray(density, dtype=float)
        return cls(d / d.sum(), grid)

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.grid.cell_volume

    @property
    def is_strictly_positive(self) -> bool:
        return bool(self.weights.min() > 0)

    def __len__(self):
        return self.weights.shape[0]

    def __repr__(self):
        return f"DiscreteMeasure(N={len(self)}, min={self.weights.min():.3g})"


def fpk_residual(q: DiscreteMeasure | np.ndarray, L: DiscreteGenerator) -> float:
    """Sup norm of q^T L, the discrete stationary Fokker-Planck residual."""
    w = q.weights if isinstance(q, DiscreteMeasure) else np.asarray(q, dtype=float)
    return float(np.abs(L.matrix.T @ w).max())


def stationary_measure(L: DiscreteGenerator) -> DiscreteMeasure:
    """Unique invariant probability measure of an irreducible generator.

    Solves L^T q = 0 with the equation of the node nearest the box centre
    replaced by sum(q) = 1.
    """
    if not L.is_irreducible():
        raise SingularSystemError("generator is reducible: invariant measure is not unique")
    n = L.size
    r = L.grid.center_node
    At = L.matrix.T.tolil()
    At[r, :] = np.ones((1, n))
    rhs = np.zeros(n)
    rhs[r] = 1.0
    try:
        q = spla.spsolve(sp.csc_matrix(At), rhs)
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SingularSystemError(f"invariant-measure solve failed: {exc}") from exc
    if not np.all(np.isfinite(q)):
        raise SingularSystemError("invariant-measure solve produced non-finite weights")
    if q.min() < -1e-12:
        node = int(np.argmin(q))
        raise NegativeMassError(f"negative invariant mass {q[node]:.3g} at node {node}")
    q = np.maximum(q, 0.0)
    q = q / q.sum()
    return DiscreteMeasure(q, L.grid)


def moment(q: DiscreteMeasure, order: int) -> float:
    """sum_i |x_i|^order q_i with the Euclidean norm of the node coordinates."""
    if int(order) != order or order < 1:
        raise ValueError("moment order must be an integer >= 1")
    r = np.linalg.norm(q.grid.points, axis=1)
    return float(r**order @ q.weights)


def tv_distance(q1: DiscreteMeasure, q2: DiscreteMeasure) -> float:
    """Total variation sum_i |q1_i - q2_i|, in [0, 2] for probability vectors."""
    if q1.grid != q2.grid:
        raise ValueError("measures live on different grids")
    return float(np.abs(q1.weights - q2.weights).sum())


def boundary_mass(q: DiscreteMeasure, layers: int = 1) -> float:
    """Mass on nodes within ``layers`` index steps of the box boundary."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    mask = q.grid.boundary_distance < layers
    return float(q.weights[mask].sum())


# ----------------------------------------------------------------------------
# CSV round trip

def _coord_header(grid: GridSpec) -> list[str]:
    return [f"x{d + 1}" for d in range(grid.dim)]


def write_node_csv(path, grid: GridSpec, columns: dict[str, np.ndarray]) -> None:
    """Node-indexed CSV: coordinate columns then the given value columns, 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_coord_header(grid) + names)
        for i, x in enumerate(grid.points):
            row = [f"{v:.17g}" for v in x]
            for c in cols:
                v = c[i]
                row.append(str(int(v)) if np.issubdtype(c.dtype, np.integer) else f"{float(v):.17g}")
            w.writerow(row)


def read_node_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Inverse of :func:`write_node_csv`: returns (points, {column: values})."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    ncoord = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    points = data[:, :ncoord]
    return points, {h: data[:, ncoord + k] for k, h in enumerate(header[ncoord:])}


def write_measure_csv(path, q: DiscreteMeasure) -> None:
    write_node_csv(path, q.grid, {"weight": q.weights})


def read_measure_csv(path, grid: GridSpec) -> DiscreteMeasure:
    points, cols = read_node_csv(path)
    if points.shape != grid.points.shape or not np.array_equal(points, grid.points):
        raise ValueError("CSV node coordinates do not match the grid")
    return DiscreteMeasure(cols["weight"], grid)
