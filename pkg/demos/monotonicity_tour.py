"""Compare the two monotonicity checks on a handful of kernels.

    python3 demos/monotonicity_tour.py
"""

from ergodic_mfg import (
    ControlSet,
    Convolution,
    CouplingSpec,
    GridSpec,
    LocalPower,
    check_C2,
    check_lasry_lions,
    compare_monotonicity,
    constant_kernel,
    gaussian_kernel,
    odd_gaussian_kernel,
    quadratic_cost,
)

grid = GridSpec([(-3.0, 3.0)], [25])
controls = ControlSet([0.0])
g = quadratic_cost()

cases = {
    "gaussian, attractive": Convolution(gaussian_kernel(-1.0, 1.0)),
    "gaussian, repulsive": Convolution(gaussian_kernel(+1.0, 1.0)),
    "constant -1": Convolution(constant_kernel(-1.0)),
    "constant +1": Convolution(constant_kernel(+1.0)),
    "odd gaussian": Convolution(odd_gaussian_kernel(-1.0, 1.0)),
    "local cube": LocalPower(3, gaussian_kernel(-0.5, 1.0)),
}

print(f"{'kernel':<22} {'C2':>6} {'max':>10}   {'LL':>6} {'max':>10}")
for name, inter in cases.items():
    spec = CouplingSpec(g, inter)
    doc = compare_monotonicity(check_C2(spec, grid, controls), check_lasry_lions(spec, grid, controls))
    c2, ll = doc["C2"], doc["lasry_lions"]
    print(f"{name:<22} {c2['verdict']:>6} {c2['max_value']:>10.3g}   {ll['verdict']:>6} {ll['max_value']:>10.3g}")
