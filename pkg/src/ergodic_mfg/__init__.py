"""Ergodic mean-field games on a truncated box: discretisation, primal solver and dual certificate."""

from .coupling import (
    ComposedConvolution,
    Convolution,
    CouplingSpec,
    Kernel,
    LocalPower,
    check_C2,
    check_lasry_lions,
    compare_monotonicity,
    constant_cost,
    constant_kernel,
    directional_difference_check,
    eval_f,
    frechet_derivative,
    gaussian_kernel,
    odd_gaussian_kernel,
    quadratic_cost,
    shifted,
    tabulated_kernel,
    validate_coupling,
)
from .dual import (
    CertificationTolerances,
    Diagnostics,
    SolutionTriple,
    ValueFunction,
    certify,
    ergodic_constant,
    hamiltonian_field,
    solve_poisson,
    uniqueness_check,
)
from .errors import (
    ConfigError,
    ErgodicMFGError,
    IncompatibleRHS,
    LimitExceeded,
    ModelError,
    MonotonicityError,
    NegativeMassError,
    NonConvergence,
    SingularSystemError,
)
from .grid import (
    CoefficientModel,
    ControlField,
    ControlSet,
    DiscreteGenerator,
    GridSpec,
    apply_generator,
    build_generator,
    linear_control_model,
    ou_model,
    tabulated_model,
    validate_coefficients,
)
from .primal import SolverConfig, brute_force_primal, pointwise_argmin, primal_objective, solve_mfg
from .stationary import DiscreteMeasure, fpk_residual, moment, stationary_measure, tv_distance

__version__ = "0.1.0"
