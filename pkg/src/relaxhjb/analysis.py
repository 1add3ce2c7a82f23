"""Quantitative experiments on top of the solver.

Every sweep returns a list of frozen row records keyed by its parameter
(``eps`` or ``t``), in input order, regardless of how many worker threads
computed them.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import smoothmax as sm
from .discretize import OperatorFamily, stencil_matrix
from .errors import ArgumentError
from .model import (ActionModel, PerturbationSpec, apply_perturbation, discrete_norm,
                    perturbation_size)
from .solver import SolveResult, SolverOptions, solve_hjb, solve_linear_dirichlet, solve_suboptimal


def _map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _tol(opts):
    return (opts or SolverOptions()).tolerance


# ---------------------------------------------------------------------------
# vanishing regularization


def error_bound_rhs(model: ActionModel, family: sm.SmoothMaxFamily, eps: float) -> float:
    """Explicit first-order bound on ``sup (u^eps - u^0)``.

    ``(exp[(max_k sum_i |b^i_k|_0 / (nu/2) + 1) diam] - 1) * 2 eps c0 / nu``
    with drift sup-norms taken over grid nodes.
    """
    if eps == 0:
        return 0.0
    drift = float(np.abs(model.b).max(axis=1).sum(axis=-1).max()) if model.b.size else 0.0
    rate = drift / (model.nu / 2) + 1.0
    return math.expm1(rate * model.grid.diameter) * 2.0 * eps * family.c0 / model.nu


@dataclass(frozen=True)
class EpsSweepRow:
    eps: float
    sup_gap: float
    bound_rhs: float
    monotone_ok: bool
    c2beta_gap: float
    control_distance: float  # sup |lam^eps - lam^0|_1 on the eroded top-gap mask; nan if empty


def control_mask(reference: SolveResult, model: ActionModel, gap_threshold: float,
                 erode: bool = True) -> np.ndarray:
    """Interior nodes where the ``eps = 0`` residual has a unique leader by ``gap_threshold``.

    With ``erode`` the mask is shrunk by one grid layer, giving a compact
    subset of the strict region. Returned as a flat boolean array over
    interior nodes.
    """
    mask = sm.top_gap(reference.residual) >= gap_threshold
    if erode:
        shaped = mask.reshape(model.grid.interior_shape)
        mask = ndimage.binary_erosion(shaped, border_value=1).ravel()
    return mask


def eps_sweep(model: ActionModel, family: sm.SmoothMaxFamily, eps_list: Sequence[float],
              opts: SolverOptions | None = None, *, beta: float = 0.5,
              gap_threshold: float = 0.1, threads: int = 1,
              reference: SolveResult | None = None) -> list[EpsSweepRow]:
    """Solve at each ``eps`` and compare against the ``eps = 0`` reference."""
    eps_list = [float(e) for e in eps_list]
    if any(e < 0 for e in eps_list):
        raise ArgumentError("eps values must be nonnegative")
    if any(a < b for a, b in zip(eps_list, eps_list[1:])):
        raise ArgumentError("eps_list must be sorted in descending order")
    tol = _tol(opts)
    ops = OperatorFamily(model)
    ref = reference or solve_hjb(model, family, 0.0, opts, ops=ops)
    sols = _map(lambda e: solve_hjb(model, family, e, opts, ops=ops), eps_list, threads)
    mask = control_mask(ref, model, gap_threshold)
    rows = []
    prev = None
    for e, s in zip(eps_list, sols):
        diff = s.u - ref.u
        mono = True if prev is None else bool(np.all(prev.u >= s.u - 2 * tol))
        dist = (float(np.abs(s.control - ref.control)[mask].sum(axis=1).max())
                if mask.any() else math.nan)
        rows.append(EpsSweepRow(e, float(diff.max()), error_bound_rhs(model, family, e), mono,
                                discrete_norm(diff, model.grid, 2, beta).combined, dist))
        prev = s
    return rows


# ---------------------------------------------------------------------------
# perturbation stability


@dataclass(frozen=True)
class StabilityRow:
    t: float
    E_per: float
    value_gap_norm: float
    control_gap_norm: float
    subopt_gap_norm: float
    subopt_min: float  # min over nodes of (u_hat - u_bar); should be >= -2 tol


def _control_norm(diff, grid, beta):
    return max(discrete_norm(diff[:, k], grid, 0, beta, region="interior").combined
               for k in range(diff.shape[1]))


def stability_sweep(base: ActionModel, spec: PerturbationSpec, t_list: Sequence[float],
                    family: sm.SmoothMaxFamily, eps: float, *, beta: float = 0.5,
                    opts: SolverOptions | None = None, threads: int = 1,
                    base_solve: SolveResult | None = None) -> list[StabilityRow]:
    """Perturbed value, control and frozen-control value gaps along ``t * spec``."""
    grid = base.grid
    base_solve = base_solve or solve_hjb(base, family, eps, opts)

    def one(t):
        pert = apply_perturbation(base, spec, t)
        pops = OperatorFamily(pert)
        hat = solve_hjb(pert, family, eps, opts, ops=pops)
        bar = solve_suboptimal(base_solve, pert, pops)
        vgap = hat.u - base_solve.u
        sgap = hat.u - bar
        return StabilityRow(
            float(t), perturbation_size(base, pert, beta),
            discrete_norm(vgap, grid, 2, beta).combined,
            _control_norm(hat.control - base_solve.control, grid, beta),
            discrete_norm(sgap, grid, 2, beta).combined,
            float(sgap.min()))

    return _map(one, t_list, threads)


# ---------------------------------------------------------------------------
# sensitivity


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    delta_u: np.ndarray  # every node
    delta_lambda: np.ndarray  # (n_interior, K)
    remainder: tuple = ()  # RemainderRow entries when validated


@dataclass(frozen=True)
class RemainderRow:
    t: float
    remainder: float
    order: float  # nan for the first row


def _direction_terms(base: ActionModel, spec: PerturbationSpec, u):
    """``L^{dtheta}_k u + df_k`` at interior nodes, shape ``(Ni, K)``.

    Upwind and cross-stencil selectors are pinned to those of the base model
    so the perturbed operator is affine in ``t`` for small ``t``.
    """
    grid = base.grid
    cols = []
    for k in range(base.K):
        mat = stencil_matrix(grid, spec.da[k], spec.db[k], spec.dc[k], b_sign=base.b[k],
                             a12_sign=base.a[k][:, 0, 1] if grid.n == 2 else None)
        cols.append(mat @ u + spec.df[k, grid.interior])
    return np.stack(cols, axis=1)


def solve_sensitivity(base: ActionModel, family: sm.SmoothMaxFamily, eps: float,
                      base_solve: SolveResult, spec: PerturbationSpec,
                      ops: OperatorFamily | None = None) -> SensitivityResult:
    """Directional derivative of the solution map and of the feedback control."""
    if eps <= 0:
        raise ArgumentError("sensitivity needs eps > 0")
    ops = ops or OperatorFamily(base)
    lam = base_solve.control
    direct = _direction_terms(base, spec, base_solve.u)
    source = np.einsum("mk,mk->m", lam, direct)
    du = solve_linear_dirichlet(lam, base, source, spec.dg, ops)
    dr = ops.apply_all(du) + direct
    hess = sm.hess_H_eps(family, eps, base_solve.residual)
    dlam = np.einsum("mkj,mj->mk", hess, dr)
    return SensitivityResult(du, dlam)


def validate_sensitivity(base: ActionModel, family: sm.SmoothMaxFamily, eps: float,
                         spec: PerturbationSpec, t_list: Sequence[float],
                         opts: SolverOptions | None = None, *, threads: int = 1,
                         base_solve: SolveResult | None = None) -> SensitivityResult:
    """Compare ``S[theta + t dtheta]`` with the first-order expansion.

    The ``order`` column is ``log(rem_prev / rem) / log(t_prev / t)``, i.e.
    ``log2(rem(t)/rem(t/2))`` for halving scales.
    """
    ops = OperatorFamily(base)
    base_solve = base_solve or solve_hjb(base, family, eps, opts, ops=ops)
    sens = solve_sensitivity(base, family, eps, base_solve, spec, ops)

    def rem(t):
        if t == 0:
            return float(np.abs(solve_hjb(base, family, eps, opts, ops=ops).u - base_solve.u).max())
        pert = apply_perturbation(base, spec, t)
        uh = solve_hjb(pert, family, eps, opts).u
        return float(np.abs(uh - base_solve.u - t * sens.delta_u).max())

    t_list = [float(t) for t in t_list]
    rems = _map(rem, t_list, threads)
    rows = []
    for i, (t, r) in enumerate(zip(t_list, rems)):
        order = math.nan
        if i > 0:
            tp, rp = t_list[i - 1], rems[i - 1]
            if t > 0 and tp > 0 and tp != t and r > 0 and rp > 0:
                order = math.log(rp / r) / math.log(tp / t)
        rows.append(RemainderRow(t, r, order))
    return SensitivityResult(sens.delta_u, sens.delta_lambda, tuple(rows))


# ---------------------------------------------------------------------------
# control convergence


@dataclass(frozen=True)
class ControlConvergenceRow:
    eps: float
    sup_distance: float  # nan when the mask is empty
    exact: bool  # control equals the eps = 0 control on the mask
    exact_predicted: bool  # eps * theta <= gap_threshold for families with a theta
    mask_size: int


def control_convergence(model: ActionModel, family: sm.SmoothMaxFamily, eps_list: Sequence[float],
                        gap_threshold: float, opts: SolverOptions | None = None, *,
                        erode: bool = True, threads: int = 1) -> list[ControlConvergenceRow]:
    """Distance of the regularized control to the unregularized one on the strict region."""
    if gap_threshold <= 0:
        raise ArgumentError("gap_threshold must be positive")
    ops = OperatorFamily(model)
    ref = solve_hjb(model, family, 0.0, opts, ops=ops)
    mask = control_mask(ref, model, gap_threshold, erode)
    if not mask.any():
        warnings.warn(f"no interior node has a top-two residual gap >= {gap_threshold}; "
                      "control distances are undefined", RuntimeWarning, stacklevel=2)
    sols = _map(lambda e: solve_hjb(model, family, e, opts, ops=ops), eps_list, threads)
    theta = family.theta_sloc
    rows = []
    for e, s in zip(eps_list, sols):
        d = np.abs(s.control - ref.control)[mask]
        sup = float(d.sum(axis=1).max()) if mask.any() else math.nan
        exact = bool(mask.any() and np.array_equal(s.control[mask], ref.control[mask]))
        predicted = theta is not None and e * theta <= gap_threshold
        rows.append(ControlConvergenceRow(float(e), sup, exact, predicted, int(mask.sum())))
    return rows


# ---------------------------------------------------------------------------
# eps scaling of the sensitivity


@dataclass(frozen=True)
class ScalingRow:
    eps: float
    norm: float  # discrete C^{2,beta} norm of delta u


def eps_scaling_probe(base: ActionModel, family: sm.SmoothMaxFamily, eps_list: Sequence[float],
                      spec: PerturbationSpec, *, beta: float = 0.5,
                      opts: SolverOptions | None = None, threads: int = 1) -> list[ScalingRow]:
    """Sensitivity norm across ``eps``. A trend table; nothing is asserted."""
    ops = OperatorFamily(base)

    def one(e):
        s = solve_hjb(base, family, e, opts, ops=ops)
        du = solve_sensitivity(base, family, e, s, spec, ops).delta_u
        return ScalingRow(float(e), discrete_norm(du, base.grid, 2, beta).combined if np.any(du) else 0.0)

    return _map(one, eps_list, threads)
