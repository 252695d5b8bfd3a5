"""Truncated state grids, finite control sets and the monotone discrete generator.

The generator discretises

    L_alpha phi = trace(a(x, alpha) D^2 phi) + b(x, alpha) . grad phi

on a box in one or two dimensions.  Every row is a Markov-chain rate row:
nonnegative off-diagonals, zero row sum.  Transitions that would leave the box
are dropped, which gives a reflecting (mass-conserving) closure.

Drift is discretised with a hybrid rule per node and axis: central differences
wherever they keep both neighbour rates strictly positive (cell Peclet number
below one), upwind differences otherwise.  ``scheme="upwind"`` forces the pure
upwind rule everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, MonotonicityError

SCHEMES = ("hybrid", "upwind", "central")


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on a closed box, nodes enumerated row-major.

    Example:
        >>> grid = GridSpec(bounds=[(-1.0, 1.0)], counts=[5])
        >>> grid.spacing
        (0.5,)
    """

    bounds: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        counts = tuple(int(n) for n in self.counts)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "counts", counts)
        if len(bounds) not in (1, 2) or len(bounds) != len(counts):
            raise ValueError("grid must be 1D or 2D with one count per axis")
        for (lo, hi), n in zip(bounds, counts):
            if not lo < hi:
                raise ValueError(f"empty axis interval [{lo}, {hi}]")
            if n < 3:
                raise ValueError(f"need at least 3 nodes per axis, got {n}")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        out = []
        for (lo, hi), n in zip(self.bounds, self.counts):
            ax = np.linspace(lo, hi, n)
            ax.setflags(write=False)
            out.append(ax)
        return tuple(out)

    @cached_property
    def multi_indices(self) -> np.ndarray:
        """(N, dim) integer array; row k holds the axis indices of flat node k."""
        idx = np.stack(np.unravel_index(np.arange(self.size), self.counts), axis=1)
        idx.setflags(write=False)
        return idx

    @cached_property
    def points(self) -> np.ndarray:
        """(N, dim) node coordinates in flat (row-major) order."""
        pts = np.stack([self.axes[d][self.multi_indices[:, d]] for d in range(self.dim)], axis=1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        """Number of index steps from each node to the nearest box face."""
        idx = self.multi_indices
        n = np.asarray(self.counts)
        dist = np.minimum(idx, n - 1 - idx).min(axis=1)
        dist.setflags(write=False)
        return dist

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in multi), self.counts))

    def nearest_node(self, x: Sequence[float]) -> int:
        """Flat index of the node closest to ``x`` (lowest index on ties)."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return int(np.argmin(np.sum((self.points - x) ** 2, axis=1)))

    @property
    def center_node(self) -> int:
        return self.nearest_node([(lo + hi) / 2 for lo, hi in self.bounds])


class ControlSet:
    """Finite set of control vectors standing in for the compact set A."""

    def __init__(self, points, box=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("control set must be a nonempty list of vectors")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("control set contains duplicate points")
        if box is None:
            box = [(float(lo), float(hi)) for lo, hi in zip(pts.min(axis=0), pts.max(axis=0))]
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != pts.shape[1]:
            raise ValueError("control box dimension does not match control points")
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        if np.any(pts < lo) or np.any(pts > hi):
            raise ValueError("control point outside the declared box")
        pts.setflags(write=False)
        self.points = pts
        self.box = box

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int) -> "ControlSet":
        return cls(np.linspace(lo, hi, count).reshape(-1, 1), box=[(lo, hi)])

    @property
    def k(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self):
        return f"ControlSet({len(self)} points in R^{self.k})"


class ControlField:
    """Per-node index into a :class:`ControlSet`."""

    def __init__(self, indices, n_controls: int | None = None):
        idx = np.array(indices, dtype=np.int64).reshape(-1)
        if n_controls is not None and (np.any(idx < 0) or np.any(idx >= n_controls)):
            raise ValueError("control index out of range")
        idx.setflags(write=False)
        self.indices = idx

    @classmethod
    def constant(cls, grid: GridSpec, index: int = 0) -> "ControlField":
        return cls(np.full(grid.size, index))

    def values(self, controls: ControlSet) -> np.ndarray:
        return controls.points[self.indices]

    def check(self, grid: GridSpec, controls: ControlSet) -> None:
        if self.indices.shape[0] != grid.size:
            raise ValueError(f"control field has {self.indices.shape[0]} entries, grid has {grid.size}")
        if np.any(self.indices < 0) or np.any(self.indices >= len(controls)):
            raise ValueError("control index out of range")

    def __eq__(self, other):
        return isinstance(other, ControlField) and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash(self.indices.tobytes())

    def __len__(self):
        return self.indices.shape[0]

    def __repr__(self):
        return f"ControlField({self.indices.tolist()})"


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """Diffusion ``a`` and drift ``b`` plus the constants they are checked against.

    ``diffusion`` and ``drift`` are vectorised: given ``x`` of shape (n, m) and
    ``alpha`` of shape (n, k) they return arrays of shape (n, m, m) and (n, m).
    In 1D, shapes (n,) are accepted for both.
    """

    diffusion: Callable[[np.ndarray, np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ellipticity_bounds: tuple[float, float] = (1.0, 1.0)
    confinement: tuple[float, float, float] = (1.0, 0.5, 2.0)  # gamma1, gamma2, chi
    growth: tuple[float, float] = (1.0, 1.0)  # K_b, theta
    moment_order: float = 2.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def evaluate(self, x: np.ndarray, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        n, m = x.shape
        a = np.asarray(self.diffusion(x, alpha), dtype=float)
        b = np.asarray(self.drift(x, alpha), dtype=float)
        if m == 1 and a.shape == (n,):
            a = a.reshape(n, 1, 1)
        if m == 1 and b.shape == (n,):
            b = b.reshape(n, 1)
        if a.shape != (n, m, m):
            raise ModelError(f"diffusion returned shape {a.shape}, expected {(n, m, m)}")
        if b.shape != (n, m):
            raise ModelError(f"drift returned shape {b.shape}, expected {(n, m)}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ModelError("coefficient model returned non-finite values")
        asym = np.abs(a - np.swapaxes(a, 1, 2))
        if np.any(asym > 1e-12 * (1.0 + np.abs(a))):
            bad = int(np.argmax(asym.reshape(n, -1).max(axis=1)))
            raise ModelError(f"diffusion matrix not symmetric at sample {bad}, x={x[bad].tolist()}")
        return a, b


def ou_model(dim: int = 1, rate: float = 1.0, diffusion: float = 1.0, moment_order: float = 2.0) -> CoefficientModel:
    """Ornstein-Uhlenbeck coefficients a = diffusion*I, b = -rate*x (no control dependence)."""

    def a(x, alpha):
        return np.broadcast_to(diffusion * np.eye(dim), (x.shape[0], dim, dim)).copy()

    def b(x, alpha):
        return -rate * x

    r = abs(rate) if rate != 0 else 1.0
    return CoefficientModel(
        diffusion=a,
        drift=b,
        ellipticity_bounds=(diffusion, diffusion),
        confinement=(1.0, r / 2.0, 2.0),
        growth=(r, 1.0),
        moment_order=moment_order,
        name="ou",
        params={"dim": dim, "rate": rate, "diffusion": diffusion},
    )


def linear_control_model(
    dim: int = 1,
    rate: float = 1.0,
    diffusion: float = 1.0,
    gain: float = 1.0,
    control_bound: float = 1.0,
    moment_order: float = 2.0,
) -> CoefficientModel:
    """a = diffusion*I, b = -rate*x + gain*alpha with alpha in R^dim, |alpha_i| <= control_bound.

    Default validation constants follow from completing the square:
    b.x <= -r|x|^2 + g M |x| <= 1 + (gM)^2/(2r) - (r/2)|x|^2.
    """

    def a(x, alpha):
        return np.broadcast_to(diffusion * np.eye(dim), (x.shape[0], dim, dim)).copy()

    def b(x, alpha):
        return -rate * x + gain * alpha

    r = abs(rate) if rate != 0 else 1.0
    reach = abs(gain) * control_bound * np.sqrt(dim)
    return CoefficientModel(
        diffusion=a,
        drift=b,
        ellipticity_bounds=(diffusion, diffusion),
        confinement=(1.0 + reach**2 / (2 * r), r / 2.0, 2.0),
        growth=(max(r, reach), 1.0),
        moment_order=moment_order,
        name="linear_control",
        params={"dim": dim, "rate": rate, "diffusion": diffusion, "gain": gain, "control_bound": control_bound},
    )


def tabulated_model(
    xs: Sequence[float],
    drift_values: Sequence[float],
    diffusion_values: Sequence[float],
    gain: float = 0.0,
    **constants,
) -> CoefficientModel:
    """1D model with a(x), b0(x) linearly interpolated from tables; b = b0(x) + gain*alpha."""
    xs = np.asarray(xs, dtype=float)
    bv = np.asarray(drift_values, dtype=float)
    av = np.asarray(diffusion_values, dtype=float)
    if not (xs.shape == bv.shape == av.shape) or xs.ndim != 1 or np.any(np.diff(xs) <= 0):
        raise ValueError("tabulated model needs increasing xs and matching value tables")

    def a(x, alpha):
        return np.interp(x[:, 0], xs, av).reshape(-1, 1, 1)

    def b(x, alpha):
        return (np.interp(x[:, 0], xs, bv) + gain * alpha[:, 0]).reshape(-1, 1)

    defaults = dict(
        ellipticity_bounds=(float(av.min()), float(av.max())),
        confinement=(1.0, 0.5, 2.0),
        growth=(1.0, 1.0),
        moment_order=2.0,
    )
    defaults.update(constants)
    return CoefficientModel(diffusion=a, drift=b, name="tabulated", params={"gain": gain}, **defaults)


# ----------------------------------------------------------------------------
# validation


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    margin: float
    witness_node: int | None = None
    witness_x: tuple | None = None
    witness_control: int | None = None
    witness_alpha: tuple | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: dict[str, AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks.values() if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks.values():
            status = "pass" if c.passed else "FAIL"
            line = f"{c.name}: {status} (worst margin {c.margin:.6g})"
            if not c.passed and c.witness_x is not None:
                line += f" at x={list(c.witness_x)}, alpha={list(c.witness_alpha)}"
            if c.detail:
                line += f" [{c.detail}]"
            lines.append(line)
        return "\n".join(lines)


def _sample_all(grid: GridSpec, controls: ControlSet):
    n, nc = grid.size, len(controls)
    node = np.tile(np.arange(n), nc)
    ctrl = np.repeat(np.arange(nc), n)
    return node, ctrl, grid.points[node], controls.points[ctrl]


def _check(name, margin, node, ctrl, grid, controls, tol, detail=""):
    worst = int(np.argmin(margin))
    return AssumptionCheck(
        name=name,
        passed=bool(margin[worst] >= -tol[worst]) and not detail,
        margin=float(margin[worst]),
        witness_node=int(node[worst]),
        witness_x=tuple(grid.points[node[worst]].tolist()),
        witness_control=int(ctrl[worst]),
        witness_alpha=tuple(controls.points[ctrl[worst]].tolist()),
        detail=detail,
    )


def validate_coefficients(model: CoefficientModel, grid: GridSpec, controls: ControlSet) -> ValidationReport:
    """Sample ellipticity, confinement and drift growth at every node x control.

    Failures are reported, not raised.  A malformed model (wrong shapes,
    non-symmetric diffusion) raises :class:`ModelError`.
    """
    node, ctrl, x, alpha = _sample_all(grid, controls)
    a, b = model.evaluate(x, alpha)
    r = np.linalg.norm(x, axis=1)

    lam_under, lam_over = model.ellipticity_bounds
    eig = np.linalg.eigvalsh(a)
    m3 = np.minimum(eig[:, 0] - lam_under, lam_over - eig[:, -1])
    d3 = ""
    if not (lam_under > 0 and lam_over >= lam_under):
        d3 = f"invalid bounds Lambda_under={lam_under}, Lambda_over={lam_over}"
    tol3 = 1e-12 * (1.0 + np.abs(eig).max(axis=1))

    g1, g2, chi = model.confinement
    bx = np.einsum("ij,ij->i", b, x)
    bound4 = g1 - g2 * r**chi
    m4 = bound4 - bx
    d4 = "" if (g1 > 0 and g2 > 0 and chi > 0) else f"confinement constants must be positive, got {model.confinement}"
    tol4 = 1e-12 * (1.0 + np.abs(bx) + np.abs(bound4))

    kb, theta = model.growth
    bnorm = np.linalg.norm(b, axis=1)
    bound6 = kb * (1.0 + r) ** theta
    m6 = bound6 - bnorm
    d6 = ""
    if not (kb > 0 and 0 <= theta <= model.moment_order):
        d6 = f"need K_b > 0 and theta in [0, d={model.moment_order}], got K_b={kb}, theta={theta}"
    tol6 = 1e-12 * (1.0 + bound6)

    checks = {
        "ellipticity": _check("ellipticity", m3, node, ctrl, grid, controls, tol3, d3),
        "confinement": _check("confinement", m4, node, ctrl, grid, controls, tol4, d4),
        "drift_growth": _check("drift_growth", m6, node, ctrl, grid, controls, tol6, d6),
    }
    return ValidationReport(checks)


# ----------------------------------------------------------------------------
# generator assembly


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    matrix: sp.csr_matrix
    grid: GridSpec
    field: ControlField | None = None
    scheme: str = "hybrid"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def off_diagonal(self) -> sp.csr_matrix:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        off.eliminate_zeros()
        return off.tocsr()

    def min_off_diagonal(self) -> float:
        off = self.off_diagonal()
        return float(off.data.min()) if off.nnz else 0.0

    def is_irreducible(self) -> bool:
        n_comp, _ = connected_components(self.off_diagonal(), directed=True, connection="strong")
        return n_comp == 1

    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def max_abs_diagonal(self) -> float:
        return float(np.abs(self.matrix.diagonal()).max())


def _offsets(dim: int):
    if dim == 1:
        return [(1,), (-1,)]
    return [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)]


def _rates(grid: GridSpec, a: np.ndarray, b: np.ndarray, scheme: str) -> dict[tuple, np.ndarray]:
    """Nonnegative jump rates per stencil offset, before boundary truncation."""
    dim = grid.dim
    h = grid.spacing
    n = grid.size
    rates = {}
    if dim == 2:
        a12 = a[:, 0, 1]
        cross = np.abs(a12) / (h[0] * h[1])
    else:
        a12 = np.zeros(n)
        cross = np.zeros(n)
    for d in range(dim):
        diff = a[:, d, d] / h[d] ** 2 - cross
        scale = a[:, d, d] / h[d] ** 2 + cross
        bad = diff < -1e-14 * scale
        if np.any(bad):
            node = int(np.flatnonzero(bad)[0])
            raise MonotonicityError(
                f"cross-diffusion breaks stencil positivity at node {node} "
                f"(x={grid.points[node].tolist()}, a={a[node].tolist()})",
                node=node,
            )
        diff = np.maximum(diff, 0.0)
        bd = b[:, d]
        half = np.abs(bd) / (2 * h[d])
        if scheme == "upwind":
            use_central = np.zeros(n, dtype=bool)
        elif scheme == "central":
            use_central = np.ones(n, dtype=bool)
            if np.any(diff - half < 0):
                node = int(np.flatnonzero(diff - half < 0)[0])
                raise MonotonicityError(f"central drift loses monotonicity at node {node}", node=node)
        else:
            use_central = diff - half > 0
        plus = np.where(use_central, diff + bd / (2 * h[d]), diff + np.maximum(bd, 0.0) / h[d])
        minus = np.where(use_central, diff - bd / (2 * h[d]), diff + np.maximum(-bd, 0.0) / h[d])
        e = [0] * dim
        e[d] = 1
        rates[tuple(e)] = plus
        e[d] = -1
        rates[tuple(e)] = minus
    if dim == 2:
        corner = cross
        pos = a12 > 0
        neg = a12 < 0
        rates[(1, 1)] = np.where(pos, corner, 0.0)
        rates[(-1, -1)] = np.where(pos, corner, 0.0)
        rates[(1, -1)] = np.where(neg, corner, 0.0)
        rates[(-1, 1)] = np.where(neg, corner, 0.0)
    return rates


def assemble_generator(grid: GridSpec, a: np.ndarray, b: np.ndarray, scheme: str = "hybrid") -> sp.csr_matrix:
    """Assemble the rate matrix from per-node coefficient arrays a (N,m,m), b (N,m)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rates = _rates(grid, a, b, scheme)
    idx = grid.multi_indices
    counts = np.asarray(grid.counts)
    n = grid.size
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for off in _offsets(grid.dim):
        r = rates[off]
        target = idx + np.asarray(off)
        inside = np.all((target >= 0) & (target < counts), axis=1) & (r > 0)
        src = np.flatnonzero(inside)
        dst = np.ravel_multi_index(tuple(target[inside].T), grid.counts)
        rows.append(src)
        cols.append(dst)
        vals.append(r[inside])
        diag[src] -= r[inside]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def build_generator(
    grid: GridSpec,
    model: CoefficientModel,
    field: ControlField,
    controls: ControlSet,
    scheme: str = "hybrid",
) -> DiscreteGenerator:
    """Monotone generator for the control field ``field`` (indices into ``controls``)."""
    field.check(grid, controls)
    a, b = model.evaluate(grid.points, field.values(controls))
    return DiscreteGenerator(assemble_generator(grid, a, b, scheme), grid, field, scheme)


def control_generators(
    grid: GridSpec, model: CoefficientModel, controls: ControlSet, scheme: str = "hybrid"
) -> list[DiscreteGenerator]:
    """One generator per control point, with that control frozen at every node.

    Row i of the generator for any field equals row i of the generator for
    the constant field at ``field[i]``, since the stencil only reads the
    coefficients at its centre node.
    """
    return [build_generator(grid, model, ControlField.constant(grid, j), controls, scheme) for j in range(len(controls))]


def adjoint(L: DiscreteGenerator) -> sp.csr_matrix:
    return L.matrix.T.tocsr()


def apply_generator(L: DiscreteGenerator, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (L.size,):
        raise ValueError(f"vector of shape {v.shape} does not match generator size {L.size}")
    return L.matrix @ v


def write_generator_coo(L: DiscreteGenerator, path) -> None:
    """Debug dump: one ``row col value`` line per stored entry."""
    coo = L.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")
