"""Mean-field payoffs f(x, alpha, mu) = g(x, alpha) + F(x, alpha, k(., alpha) * mu(x)).

Convolutions are direct sums over grid nodes, ``k * mu (x) = sum_j k(x - x_j, alpha) mu_j``.
Every interaction has the form F(x, alpha, s) with s the convolution, so the
Frechet derivative in mu is always

    D_mu f(x, alpha, mu)[h] = dF/ds(x, alpha, s) * (k * h)(x),

which is what :func:`derivative_column` returns in factored form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import AssumptionCheck, CoefficientModel, ControlField, ControlSet, GridSpec, ValidationReport
from .stationary import DiscreteMeasure


# ----------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class Kernel:
    """Convolution kernel k(z, alpha); vectorised over leading axes of z (..., m)."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"
    alpha_dependent: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, z, alpha=None):
        return np.asarray(self.func(np.asarray(z, dtype=float), alpha), dtype=float)


def gaussian_kernel(amplitude: float = -1.0, width: float = 1.0) -> Kernel:
    return Kernel(
        lambda z, alpha: amplitude * np.exp(-np.sum(z**2, axis=-1) / width**2),
        name="gaussian",
        params={"amplitude": amplitude, "width": width},
    )


def constant_kernel(value: float = -1.0) -> Kernel:
    return Kernel(lambda z, alpha: np.full(z.shape[:-1], float(value)), name="constant", params={"value": value})


def odd_gaussian_kernel(amplitude: float = -1.0, width: float = 1.0) -> Kernel:
    """amplitude * z_1 * exp(-|z|^2 / width^2); odd in z."""
    return Kernel(
        lambda z, alpha: amplitude * z[..., 0] * np.exp(-np.sum(z**2, axis=-1) / width**2),
        name="odd_gaussian",
        params={"amplitude": amplitude, "width": width},
    )


def tabulated_kernel(zs: Sequence[float], values: Sequence[float]) -> Kernel:
    """Linear interpolation on a z-table: signed z in 1D, |z| in 2D.  Clamped outside the table."""
    zs = np.asarray(zs, dtype=float)
    vs = np.asarray(values, dtype=float)
    if zs.ndim != 1 or zs.shape != vs.shape or np.any(np.diff(zs) <= 0):
        raise ValueError("tabulated kernel needs increasing zs with matching values")

    def k(z, alpha):
        arg = z[..., 0] if z.shape[-1] == 1 else np.linalg.norm(z, axis=-1)
        return np.interp(arg, zs, vs)

    return Kernel(k, name="tabulated", params={"zs": zs.tolist(), "values": vs.tolist()})


# ----------------------------------------------------------------------------
# interactions


@dataclass(frozen=True, eq=False)
class Convolution:
    kernel: Kernel

    def outer(self, x, alpha, s):
        return s

    def slope(self, x, alpha, s):
        return np.ones_like(s)


@dataclass(frozen=True, eq=False)
class ComposedConvolution:
    """F(x, alpha, s) = outer(x, alpha, s) with its s-derivative supplied explicitly."""

    kernel: Kernel
    outer_func: Callable
    outer_deriv_s: Callable

    def outer(self, x, alpha, s):
        return np.asarray(self.outer_func(x, alpha, s), dtype=float)

    def slope(self, x, alpha, s):
        return np.asarray(self.outer_deriv_s(x, alpha, s), dtype=float)


@dataclass(frozen=True, eq=False)
class LocalPower:
    """F = s**gamma / gamma for an odd integer gamma."""

    gamma: int
    kernel: Kernel

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 1 or self.gamma % 2 == 0:
            raise ValueError(f"LocalPower needs an odd positive integer gamma, got {self.gamma}")

    def outer(self, x, alpha, s):
        return s**self.gamma / self.gamma

    def slope(self, x, alpha, s):
        return s ** (self.gamma - 1)


Interaction = Convolution | ComposedConvolution | LocalPower | None


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """Payoff f = base(x, alpha) + interaction term.

    ``base`` is vectorised: x (n, m), alpha (n, k) -> (n,).
    """

    base: Callable[[np.ndarray, np.ndarray], np.ndarray]
    interaction: Interaction = None
    growth_order: float = 2.0
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False)

    def kernel_matrix(self, grid: GridSpec, alpha) -> np.ndarray:
        """K[i, j] = k(x_i - x_j, alpha) for one control vector alpha."""
        kern = self.interaction.kernel
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        key = (grid,) if not kern.alpha_dependent else (grid, alpha.tobytes())
        mat = self._cache.get(key)
        if mat is None:
            pts = grid.points
            z = pts[:, None, :] - pts[None, :, :]
            mat = kern(z, np.broadcast_to(alpha, z.shape[:2] + alpha.shape))
            if mat.shape != (grid.size, grid.size):
                raise ValueError(f"kernel returned shape {mat.shape}")
            mat.setflags(write=False)
            self._cache[key] = mat
        return mat


def quadratic_cost(x_weight: float = 1.0, alpha_weight: float = 1.0, offset: float = 0.0):
    """g(x, alpha) = x_weight |x|^2 / 2 + alpha_weight |alpha|^2 / 2 + offset."""

    def g(x, alpha):
        return x_weight * np.sum(x**2, axis=-1) / 2 + alpha_weight * np.sum(alpha**2, axis=-1) / 2 + offset

    return g


def constant_cost(value: float):
    def g(x, alpha):
        return np.full(np.shape(x)[0], float(value))

    return g


def _weights(q) -> np.ndarray:
    return q.weights if isinstance(q, DiscreteMeasure) else np.asarray(q, dtype=float)


# ----------------------------------------------------------------------------
# evaluation


def eval_f(spec: CouplingSpec, x, alpha, q: DiscreteMeasure) -> float:
    """f(x, alpha, q) at a single state point ``x`` (need not be a grid node)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    alpha = np.asarray(alpha, dtype=float).reshape(1, -1)
    val = float(np.asarray(spec.base(x, alpha)).reshape(-1)[0])
    inter = spec.interaction
    if inter is None:
        return val
    s = _pointwise_convolution(inter.kernel, x, alpha, q)
    return val + float(np.asarray(inter.outer(x, alpha, s)).reshape(-1)[0])


def _pointwise_convolution(kern: Kernel, x, alpha, q, h=None) -> np.ndarray:
    pts = q.grid.points
    z = x[0][None, :] - pts
    kv = kern(z, np.broadcast_to(alpha[0], (pts.shape[0], alpha.shape[1])))
    w = _weights(q) if h is None else np.asarray(h, dtype=float)
    return np.array([kv @ w])


def frechet_derivative(spec: CouplingSpec, x, alpha, q: DiscreteMeasure, h) -> float:
    """D_mu f(x, alpha, q)[h] for a signed node-vector h."""
    inter = spec.interaction
    if inter is None:
        return 0.0
    x = np.asarray(x, dtype=float).reshape(1, -1)
    alpha = np.asarray(alpha, dtype=float).reshape(1, -1)
    s = _pointwise_convolution(inter.kernel, x, alpha, q)
    kh = _pointwise_convolution(inter.kernel, x, alpha, q, h)
    return float(np.asarray(inter.slope(x, alpha, s)).reshape(-1)[0] * kh[0])


def cost_column(spec: CouplingSpec, grid: GridSpec, alpha, q) -> np.ndarray:
    """f(x_i, alpha, q) at every node for one control vector alpha."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    x = grid.points
    ab = np.broadcast_to(alpha, (grid.size, alpha.shape[0]))
    vals = np.asarray(spec.base(x, ab), dtype=float).reshape(grid.size)
    inter = spec.interaction
    if inter is None:
        return vals
    s = spec.kernel_matrix(grid, alpha) @ _weights(q)
    return vals + inter.outer(x, ab, s)


def cost_table(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, q) -> np.ndarray:
    """(N, |A|) table of f(x_i, alpha_j, q)."""
    return np.stack([cost_column(spec, grid, a, q) for a in controls.points], axis=1)


def field_costs(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, field: ControlField, q) -> np.ndarray:
    """f(x_i, alpha(x_i), q); each used column is computed exactly as in :func:`cost_table`."""
    out = np.empty(grid.size)
    for j in np.unique(field.indices):
        sel = field.indices == j
        out[sel] = cost_column(spec, grid, controls.points[j], q)[sel]
    return out


def derivative_column(spec: CouplingSpec, grid: GridSpec, alpha, q) -> tuple[np.ndarray, np.ndarray | None]:
    """Factors (phi, K) with D_mu f(x_i, alpha, q)[h] = phi_i * (K h)_i.  K is None without interaction."""
    inter = spec.interaction
    if inter is None:
        return np.zeros(grid.size), None
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    K = spec.kernel_matrix(grid, alpha)
    s = K @ _weights(q)
    ab = np.broadcast_to(alpha, (grid.size, alpha.shape[0]))
    return np.asarray(inter.slope(grid.points, ab, s), dtype=float), K


def frechet_field(spec: CouplingSpec, grid: GridSpec, alpha, q, h) -> np.ndarray:
    """D_mu f(x_i, alpha, q)[h] at every node."""
    phi, K = derivative_column(spec, grid, alpha, q)
    if K is None:
        return phi
    return phi * (K @ np.asarray(h, dtype=float))


# ----------------------------------------------------------------------------
# first-order consistency


@dataclass
class DifferenceReport:
    t: np.ndarray
    errors: np.ndarray
    feasible: np.ndarray
    derivative: float

    @property
    def ratios(self) -> np.ndarray:
        """errors[k+1] / errors[k] over consecutive feasible steps."""
        e = self.errors[self.feasible]
        with np.errstate(divide="ignore", invalid="ignore"):
            return e[1:] / e[:-1]


def halving_steps(start: float = 1e-2, stop: float = 1e-5) -> np.ndarray:
    """start, start/2, start/4, ... down to the last value >= stop."""
    n = int(np.floor(np.log2(start / stop))) + 1
    return start * 0.5 ** np.arange(n)


def directional_difference_check(spec: CouplingSpec, x, alpha, q: DiscreteMeasure, h, t_list=None) -> DifferenceReport:
    """|[f(x, alpha, q + t h) - f(x, alpha, q)] / t - D_mu f(x, alpha, q)[h]| for each t.

    Steps where q + t h has a negative weight are skipped and flagged infeasible.
    """
    t_list = halving_steps() if t_list is None else np.asarray(t_list, dtype=float)
    h = np.asarray(h, dtype=float)
    base = eval_f(spec, x, alpha, q)
    deriv = frechet_derivative(spec, x, alpha, q, h)
    errors = np.full(len(t_list), np.nan)
    feasible = np.zeros(len(t_list), dtype=bool)
    for k, t in enumerate(t_list):
        w = q.weights + t * h
        if w.min() < 0:
            continue
        feasible[k] = True
        shifted = DiscreteMeasure(w, q.grid, check=False)
        errors[k] = abs((eval_f(spec, x, alpha, shifted) - base) / t - deriv)
    return DifferenceReport(np.asarray(t_list), errors, feasible, deriv)


# ----------------------------------------------------------------------------
# monotonicity checkers


@dataclass
class MonotonicityReport:
    """Sampled values of a monotonicity pairing, indexed [control, q-sample, h-sample]."""

    condition: str
    values: np.ndarray
    tolerance: float = 1e-12

    @property
    def verdict(self) -> bool:
        return bool(self.values.size == 0 or self.values.max() <= self.tolerance)

    @property
    def worst(self) -> tuple[float, tuple[int, int, int]]:
        if self.values.size == 0:
            return 0.0, (-1, -1, -1)
        idx = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.values[idx]), tuple(int(i) for i in idx)

    @property
    def n_samples(self) -> int:
        return self.values.shape[2] if self.values.ndim == 3 else 0

    def to_dict(self) -> dict:
        worst, (c, iq, ih) = self.worst
        return {
            "condition": self.condition,
            "verdict": "pass" if self.verdict else "fail",
            "max_value": worst,
            "min_value": float(self.values.min()) if self.values.size else 0.0,
            "witness": {"control": c, "q_sample": iq, "h_sample": ih},
            "n_values": int(self.values.size),
            "tolerance": self.tolerance,
        }


def default_samples(grid: GridSpec, signed: bool = False, n_random: int = 32, seed: int = 0) -> np.ndarray:
    """(N, n_random + N) sample matrix: seeded random vectors followed by the N point masses.

    Nonnegative random samples are normalised to unit mass; signed ones are
    standard normal vectors.
    """
    rng = np.random.default_rng(seed)
    if signed:
        rand = rng.standard_normal((grid.size, n_random))
    else:
        rand = rng.random((grid.size, n_random))
        rand /= rand.sum(axis=0, keepdims=True)
    return np.concatenate([rand, np.eye(grid.size)], axis=1)


def _as_columns(samples, grid: GridSpec) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 2 and samples.shape[0] == grid.size:
        return samples.astype(float)
    cols = [_weights(s) for s in samples]
    return np.stack(cols, axis=1) if cols else np.zeros((grid.size, 0))


def _slopes(spec: CouplingSpec, grid: GridSpec, alpha, Q: np.ndarray):
    inter = spec.interaction
    K = spec.kernel_matrix(grid, alpha)
    S = K @ Q
    x = grid.points
    ab = np.broadcast_to(np.asarray(alpha, dtype=float), (grid.size, len(np.atleast_1d(alpha))))
    Phi = np.stack([np.asarray(inter.slope(x, ab, S[:, s]), dtype=float) for s in range(Q.shape[1])], axis=1)
    return K, Phi


def check_C2(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, q_samples=None, h_samples=None, tolerance=1e-12) -> MonotonicityReport:
    """<D_mu f(., alpha, q)[h], q> for every control, q-sample and h-sample (all nonnegative).

    Defaults for both sample sets come from :func:`default_samples`.
    """
    Q = _as_columns(default_samples(grid) if q_samples is None else q_samples, grid)
    H = _as_columns(default_samples(grid) if h_samples is None else h_samples, grid)
    if Q.size and Q.min() < 0 or H.size and H.min() < 0:
        raise ValueError("C2 samples must be nonnegative")
    vals = np.zeros((len(controls), Q.shape[1], H.shape[1]))
    if spec.interaction is not None:
        for j, alpha in enumerate(controls.points):
            K, Phi = _slopes(spec, grid, alpha, Q)
            vals[j] = (Q * Phi).T @ (K @ H)
    return MonotonicityReport("C2", vals, tolerance)


def check_lasry_lions(spec: CouplingSpec, grid: GridSpec, controls: ControlSet, h_samples_signed=None, q_samples=None, tolerance=1e-12) -> MonotonicityReport:
    """<D_mu f(., alpha, q)[h], h> for every control, q-sample and signed h-sample."""
    Q = _as_columns(default_samples(grid) if q_samples is None else q_samples, grid)
    H = _as_columns(default_samples(grid, signed=True) if h_samples_signed is None else h_samples_signed, grid)
    vals = np.zeros((len(controls), Q.shape[1], H.shape[1]))
    if spec.interaction is not None:
        for j, alpha in enumerate(controls.points):
            K, Phi = _slopes(spec, grid, alpha, Q)
            KH = K @ H
            # vals[s, t] = sum_i Phi[i, s] * KH[i, t] * H[i, t]
            vals[j] = Phi.T @ (KH * H)
    return MonotonicityReport("M'", vals, tolerance)


def compare_monotonicity(c2: MonotonicityReport, ll: MonotonicityReport) -> dict:
    """Side-by-side verdicts of the C2 and Lasry-Lions checks."""
    return {
        "C2": c2.to_dict(),
        "lasry_lions": ll.to_dict(),
        "agree": c2.verdict == ll.verdict,
    }


def shifted(spec: CouplingSpec, K: float) -> CouplingSpec:
    """The same payoff lowered by the constant K."""
    base = spec.base

    def g(x, alpha):
        return np.asarray(base(x, alpha), dtype=float) - K

    return CouplingSpec(g, spec.interaction, spec.growth_order, f"{spec.name}-shift{K:g}")


def validate_coupling(spec: CouplingSpec, model: CoefficientModel, grid: GridSpec, controls: ControlSet) -> ValidationReport:
    """Declared growth order, kernel boundedness and a sampled growth-order estimate.

    The growth estimate compares the largest |f| on the outer shell of the box
    with the largest |f| inside half the radius: the effective exponent
    log((1 + M_R) / (1 + M_R/2)) / log 2 must not exceed growth_order + 0.25.
    Payoffs are sampled at the uniform measure.
    """
    checks = {}
    d = model.moment_order
    ok = spec.growth_order <= d
    checks["growth_order"] = AssumptionCheck(
        "growth_order", ok, float(d - spec.growth_order),
        detail="" if ok else f"growth_order {spec.growth_order} exceeds moment order d={d}",
    )

    q = DiscreteMeasure.uniform(grid)
    if spec.interaction is not None:
        kmax = max(float(np.abs(spec.kernel_matrix(grid, a)).max()) for a in controls.points)
        ok = bool(np.isfinite(kmax))
        checks["kernel_bounded"] = AssumptionCheck("kernel_bounded", ok, kmax, detail="" if ok else "kernel not finite on the grid")

    table = np.abs(cost_table(spec, grid, controls, q)).max(axis=1)
    r = np.linalg.norm(grid.points, axis=1)
    R = r.max()
    inner = table[r <= R / 2].max() if np.any(r <= R / 2) else 0.0
    outer = table.max()
    p_eff = float(np.log((1.0 + outer) / (1.0 + inner)) / np.log(2.0)) if R > 0 else 0.0
    ok = bool(np.isfinite(p_eff) and p_eff <= spec.growth_order + 0.25)
    checks["growth_sampled"] = AssumptionCheck(
        "growth_sampled", ok, float(spec.growth_order + 0.25 - p_eff),
        witness_node=int(np.argmax(table)),
        detail="" if ok else f"sampled growth exponent {p_eff:.3f} above declared order {spec.growth_order}",
    )
    return ValidationReport(checks)
