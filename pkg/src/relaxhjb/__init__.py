"""Exploration-regularized HJB exit-time problems on boxes.

Smooth-max generators, monotone finite-difference discretization, policy
iteration, perturbation/sensitivity analysis and Monte Carlo verification.
"""

__version__ = "0.1.0"

from .analysis import (ControlConvergenceRow, EpsSweepRow, RemainderRow, ScalingRow,
                       SensitivityResult, StabilityRow, control_convergence, error_bound_rhs,
                       eps_scaling_probe, eps_sweep, solve_sensitivity, stability_sweep,
                       validate_sensitivity)
from .discretize import Grid, OperatorFamily, StencilOperator, apply, assemble_Lk, build_grid, residual_components
from .errors import (ArgumentError, CapabilityError, ConfigError, DiscretizationError, ModelError,
                     NotPSDError, PerturbationError, RelaxHJBError, SimulationError, SolverError)
from .model import (ActionModel, DiscreteNormReport, PerturbationSpec, apply_perturbation,
                    discrete_norm, perturbation_size, validate)
from .problems import make_problem
from .simulate import McEstimate, MixedDiffusion, mixed_coefficients, psd_sqrt, simulate_value
from .smoothmax import (GeneratorKind, SmoothMaxFamily, build_family, eval_H, eval_H_eps,
                        exploration_cost, grad_H_eps, hess_H_eps, rho_entropy, sloc_holds_at,
                        subdiff_H0)
from .solver import (SolveResult, SolverOptions, feedback_control, solve_hjb,
                     solve_linear_dirichlet, solve_suboptimal)
