"""Exhaustive search versus the fixed-point solver on a six-node grid.

    python3 demos/oracle_check.py
"""

from ergodic_mfg import (
    ControlSet,
    Convolution,
    CouplingSpec,
    GridSpec,
    LocalPower,
    brute_force_primal,
    gaussian_kernel,
    linear_control_model,
    primal_objective,
    quadratic_cost,
    solve_mfg,
)

grid = GridSpec([(-2.5, 2.5)], [6])
controls = ControlSet([-0.5, 0.0, 0.5])
model = linear_control_model(control_bound=0.5)

for name, inter in [
    ("none", None),
    ("convolution", Convolution(gaussian_kernel(-1.0, 1.0))),
    ("local cube", LocalPower(3, gaussian_kernel(-0.5, 1.0))),
]:
    spec = CouplingSpec(quadratic_cost(), inter)
    field, _, best = brute_force_primal(spec, grid, model, controls)
    sol = solve_mfg(spec, grid, model, controls)
    got = primal_objective(sol.field, spec, grid, model, controls)
    print(f"{name:<12} oracle {best:.10f}  solver {got:.10f}  same field: {sol.field == field}")
