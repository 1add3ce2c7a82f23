"""Monte Carlo evaluation of a relaxed feedback control.

The state follows ``dX = b~ dt + sigma~ dW`` with the mixed drift
``b~ = sum_k lam_k b_k`` and the symmetric root ``sigma~`` of
``sum_k lam_k 2 a_k``. Each path accumulates the discounted running reward
``sum_k lam_k f_k - eps rho(lam)`` until it leaves the box, then collects the
exit reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, NotPSDError, SimulationError
from .model import ActionModel
from .solver import SolveResult

MAX_STEPS = 10**7


def psd_sqrt(A, tol: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition. Works on stacks ``(..., n, n)``.

    Eigenvalues in ``[-tol, 0)`` are clamped to zero; anything lower raises
    :class:`NotPSDError`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ArgumentError(f"expected square matrices, got shape {A.shape}")
    if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0))):
        raise ArgumentError("matrix is not symmetric")
    w, V = np.linalg.eigh(A)
    if np.any(w < -tol):
        raise NotPSDError(f"matrix has eigenvalue {w.min():.6g} < -{tol:g}")
    w = np.clip(w, 0.0, None)
    S = (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return (S + np.swapaxes(S, -1, -2)) / 2


@dataclass(frozen=True, eq=False)
class MixedDiffusion:
    b_mixed: np.ndarray  # (M, n)
    sigma_mixed: np.ndarray  # (M, n, n), symmetric


def mixed_coefficients(model: ActionModel, lam, nodes=None) -> MixedDiffusion:
    """Mixed drift and diffusion root for controls ``lam`` of shape ``(M, K)``.

    ``nodes`` gives the flat grid index of each row (default: interior nodes).
    """
    nodes = model.grid.interior if nodes is None else np.asarray(nodes)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (nodes.size, model.K):
        raise ArgumentError(f"control of shape {lam.shape} does not match {nodes.size} nodes")
    if np.any(lam < -1e-12) or np.any(np.abs(lam.sum(axis=1) - 1) > 1e-10):
        raise ArgumentError("control rows must lie in the simplex")
    b = np.einsum("mk,kmi->mi", lam, model.b[:, nodes])
    cov = np.einsum("mk,kmij->mij", lam, 2.0 * model.a[:, nodes])
    return MixedDiffusion(b, psd_sqrt(cov))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    dt: float
    seed: int
    mean_steps: float = math.nan


def _interior_lookup(grid, X):
    """Index into interior arrays of the interior node nearest to each row of ``X``."""
    idx = np.rint((X - np.array(grid.lo)) / grid.h).astype(np.int64)
    idx = np.clip(idx, 1, np.array(grid.shape) - 2) - 1
    return np.ravel_multi_index(tuple(idx.T), grid.interior_shape)


def simulate_value(model: ActionModel, result: SolveResult, x0, n_paths: int, dt: float,
                   seed: int, *, bridge: bool = True, max_steps: int = MAX_STEPS) -> McEstimate:
    """Estimate the value of the feedback control stored in ``result`` at ``x0``.

    Coefficients, control and exploration cost are read at the nearest
    interior node. With ``bridge`` (default) a path that ends a step inside
    the box is also stopped with the Brownian-bridge probability of having
    crossed a face during the step, which removes the leading
    ``O(sqrt(dt))`` bias of step-resolution exit detection. Normals come from
    a Philox generator seeded with ``seed``, so results are reproducible.
    """
    grid = model.grid
    lo, hi = np.array(grid.lo), np.array(grid.hi)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (grid.n,):
        raise ArgumentError(f"x0 must have {grid.n} coordinates")
    if np.any(x0 <= lo) or np.any(x0 >= hi):
        raise ArgumentError(f"x0 = {x0.tolist()} is not strictly inside the domain")
    if n_paths < 1 or not dt > 0:
        raise ArgumentError("need n_paths >= 1 and dt > 0")
    lam = result.control
    mixed = mixed_coefficients(model, lam)
    nodes = grid.interior
    c_mix = np.einsum("mk,km->m", lam, model.c[:, nodes])
    run = np.einsum("mk,km->m", lam, model.f[:, nodes]) - result.exploration
    var = np.einsum("mij,mij->mi", mixed.sigma_mixed, mixed.sigma_mixed)  # (S S^T)_ii
    sqdt = math.sqrt(dt)

    rng = np.random.Generator(np.random.Philox(seed))
    X = np.tile(x0, (n_paths, 1))
    gamma = np.ones(n_paths)
    total = np.zeros(n_paths)
    alive = np.arange(n_paths)
    steps = np.zeros(n_paths, dtype=np.int64)
    n = grid.n
    step = 0
    while alive.size:
        if step >= max_steps:
            raise SimulationError(f"{alive.size} paths still inside after {max_steps} steps")
        step += 1
        Xa = X[alive]
        j = _interior_lookup(grid, Xa)
        total[alive] += gamma[alive] * run[j] * dt
        gamma[alive] *= np.exp(-dt * c_mix[j])
        dW = rng.standard_normal((alive.size, n)) * sqdt
        Xn = Xa + mixed.b_mixed[j] * dt + np.einsum("mij,mj->mi", mixed.sigma_mixed[j], dW)
        out = np.any((Xn <= lo) | (Xn >= hi), axis=1)
        if bridge:
            s2 = var[j] * dt
            with np.errstate(over="ignore", divide="ignore"):
                p_lo = np.exp(-2.0 * np.clip(Xa - lo, 0, None) * np.clip(Xn - lo, 0, None) / s2)
                p_hi = np.exp(-2.0 * np.clip(hi - Xa, 0, None) * np.clip(hi - Xn, 0, None) / s2)
            u = rng.random((alive.size, n, 2))
            hit_lo, hit_hi = u[..., 0] < p_lo, u[..., 1] < p_hi
            crossed = ~out & np.any(hit_lo | hit_hi, axis=1)
            # place bridged exits on the crossed face
            Xn = np.where(crossed[:, None] & hit_lo, lo, Xn)
            Xn = np.where(crossed[:, None] & hit_hi & ~hit_lo, hi, Xn)
            out |= crossed
        X[alive] = Xn
        steps[alive] += 1
        done = alive[out]
        if done.size:
            Xe = np.clip(X[done], lo, hi)
            total[done] += gamma[done] * model.g[grid.nearest_node(Xe)]
            alive = alive[~out]
    mean = float(np.mean(total))
    stderr = float(np.std(total, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return McEstimate(mean, stderr, int(n_paths), float(dt), int(seed), float(steps.mean()))
