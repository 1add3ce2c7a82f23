"""Policy iteration for the regularized Dirichlet HJB problem.

Solves ``H_eps(L u + f) = 0`` in the interior with ``u = g`` on the
boundary. Each outer step freezes the relaxed control
``lam = grad H_eps(L u + f)`` (the lowest-index argmax unit vector when
``eps = 0``) and solves the linear M-matrix system

    lam^T (L w + f) - eps rho(lam) = 0,

with ``eps rho(lam)`` supplied by the conjugate identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import smoothmax as sm
from .discretize import OperatorFamily
from .errors import ArgumentError, SolverError
from .model import ActionModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 200
    tie_tolerance: float = sm.DEFAULT_TIE_TOL

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ArgumentError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ArgumentError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class SolveResult:
    u: np.ndarray  # values at every node
    control: np.ndarray  # (n_interior, K)
    residual: np.ndarray  # L u + f at interior nodes, (n_interior, K)
    iterations: int
    final_residual: float
    eps: float
    family: sm.SmoothMaxFamily
    history: list = field(default_factory=list)

    @property
    def exploration(self) -> np.ndarray:
        """``eps rho(control)`` at interior nodes."""
        if self.eps == 0:
            return np.zeros(self.control.shape[0])
        return sm.exploration_cost(self.family, self.eps, self.residual)


def _boundary_values(model, boundary):
    grid = model.grid
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape == (grid.size,):
        return boundary[grid.boundary]
    if boundary.shape == (grid.boundary.size,):
        return boundary
    if boundary.ndim == 0:
        return np.full(grid.boundary.size, float(boundary))
    raise ArgumentError(f"boundary data of shape {boundary.shape} do not match the grid")


def solve_linear_dirichlet(mixing, model: ActionModel, source, boundary,
                           ops: Optional[OperatorFamily] = None) -> np.ndarray:
    """Solve ``sum_k mixing_k L_k w + source = 0`` inside, ``w = boundary`` on the boundary.

    ``mixing`` has shape ``(n_interior, K)``, ``source`` ``(n_interior,)``.
    Returns ``w`` at every node.
    """
    ops = ops or OperatorFamily(model)
    grid = model.grid
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (grid.interior.size, model.K):
        raise ArgumentError(f"mixing has shape {mixing.shape}")
    source = np.broadcast_to(np.asarray(source, dtype=float), (grid.interior.size,))
    gb = _boundary_values(model, boundary)
    A_ii, A_ib = ops.mixed(mixing)
    rhs = -(source + A_ib @ gb)
    w = np.empty(grid.size)
    w[grid.boundary] = gb
    w[grid.interior] = spla.spsolve(A_ii, rhs)
    return w


def _policy(family, eps, r, tie_tol):
    """Control and ``eps rho(control)`` for residual rows ``r``."""
    if eps == 0:
        return sm.argmax_unit(r, tie_tol), np.zeros(r.shape[0])
    return sm.grad_H_eps(family, eps, r), sm.exploration_cost(family, eps, r)


def hjb_residual(family, eps, r) -> float:
    """``sup |H_eps(r)|`` over interior rows."""
    return float(np.abs(sm.eval_H_eps(family, eps, r)).max(initial=0.0))


def solve_hjb(model: ActionModel, family: sm.SmoothMaxFamily, eps: float,
              opts: SolverOptions | None = None, *, ops: OperatorFamily | None = None,
              callback: Callable[[int, np.ndarray], None] | None = None) -> SolveResult:
    """Solve ``H_eps(L u + f) = 0``, ``u = g`` by policy iteration.

    The first iterate uses the uniform mixture. ``callback(i, u)`` is
    invoked with every iterate, which is handy for checking monotonicity.
    """
    opts = opts or SolverOptions()
    eps = float(eps)
    if eps < 0:
        raise ArgumentError("eps must be nonnegative")
    if family.K != model.K:
        raise ArgumentError(f"family has K={family.K}, model has K={model.K}")
    ops = ops or OperatorFamily(model)
    ni = model.grid.interior.size
    lam = np.full((ni, model.K), 1.0 / model.K)
    u = solve_linear_dirichlet(lam, model, np.einsum("mk,mk->m", lam, ops.f_interior),
                               model.g, ops)
    history = []
    for it in range(opts.max_iterations + 1):
        if callback is not None:
            callback(it, u)
        r = ops.residual(u)
        res = hjb_residual(family, eps, r)
        history.append(res)
        if res <= opts.tolerance:
            break
        if it == opts.max_iterations:
            raise SolverError(
                f"policy iteration did not converge in {opts.max_iterations} steps "
                f"(residual {res:.3e})", history)
        lam, cost = _policy(family, eps, r, opts.tie_tolerance)
        source = np.einsum("mk,mk->m", lam, ops.f_interior) - cost
        u = solve_linear_dirichlet(lam, model, source, model.g, ops)
    log.debug("solve_hjb eps=%g converged in %d iterations, residual %.3e", eps, it, res)
    control, _ = _policy(family, eps, r, opts.tie_tolerance)
    return SolveResult(u, control, r, it, res, eps, family, history)


def feedback_control(u, model: ActionModel, family: sm.SmoothMaxFamily, eps: float,
                     tie_tolerance: float = sm.DEFAULT_TIE_TOL,
                     ops: OperatorFamily | None = None) -> np.ndarray:
    """Relaxed feedback control ``grad H_eps(L u + f)`` at interior nodes.

    At ``eps = 0`` this is the lowest-index argmax unit vector.
    """
    ops = ops or OperatorFamily(model)
    r = ops.residual(np.asarray(u, dtype=float))
    return _policy(family, float(eps), r, tie_tolerance)[0]


def solve_suboptimal(frozen: SolveResult, perturbed: ActionModel,
                     ops: OperatorFamily | None = None) -> np.ndarray:
    """Reward of the frozen base control on a perturbed model.

    Solves ``lam^T (L_hat w + f_hat) - eps rho(lam) = 0``, ``w = g_hat``,
    where ``lam`` and ``eps rho(lam)`` come from the base solve.
    """
    ops = ops or OperatorFamily(perturbed)
    lam = frozen.control
    if lam.shape != (perturbed.grid.interior.size, perturbed.K):
        raise ArgumentError("frozen control does not match the perturbed model")
    source = np.einsum("mk,mk->m", lam, ops.f_interior) - frozen.exploration
    return solve_linear_dirichlet(lam, perturbed, source, perturbed.g, ops)
