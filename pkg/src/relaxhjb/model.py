"""Coefficient bundles, perturbations and discrete Hölder norms.

All coefficient fields are sampled at the nodes of the model's grid:

    a : (K, N, n, n)   diffusion, a_k = sigma_k sigma_k^T / 2
    b : (K, N, n)      drift
    c : (K, N)         discount rate, >= 0
    f : (K, N)         running reward
    g : (N,)           exit reward
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Union

import numpy as np

from .discretize import Grid
from .errors import ArgumentError, ModelError, PerturbationError

FieldLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]

SYMMETRY_TOL = 1e-12
ELLIPTICITY_TOL = 1e-12


def sample_field(value: FieldLike, grid: Grid, trailing=()) -> np.ndarray:
    """Sample a constant, node array or callable of coordinates ``(N, n)`` on ``grid``."""
    target = (grid.size,) + tuple(trailing)
    if callable(value):
        value = value(grid.coords)
    arr = np.asarray(value, dtype=float)
    if arr.shape == (grid.size,) and trailing:
        arr = arr.reshape((grid.size,) + (1,) * len(trailing))
    try:
        return np.array(np.broadcast_to(arr, target))
    except ValueError:
        raise ArgumentError(f"field of shape {arr.shape} does not fit {target}") from None


@dataclass(frozen=True, eq=False)
class ActionModel:
    grid: Grid
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: np.ndarray
    g: np.ndarray
    nu: float
    name: str = "custom"

    @property
    def K(self) -> int:
        return self.f.shape[0]

    @property
    def n(self) -> int:
        return self.grid.n

    @classmethod
    def from_fields(cls, grid: Grid, nu: float, *, a, b=0.0, c=0.0, f=0.0, g=0.0, K=None,
                    name="custom"):
        """Build a model from per-action field specs.

        ``a``, ``b``, ``c``, ``f`` are each a single spec shared by all actions
        or a list with one spec per action; a spec is anything
        :func:`sample_field` accepts.
        """
        lists = [v for v in (a, b, c, f) if isinstance(v, (list, tuple))]
        if K is None:
            K = max((len(v) for v in lists), default=1)
        n = grid.n

        def per_action(v, trailing):
            seq = v if isinstance(v, (list, tuple)) else [v] * K
            if len(seq) != K:
                raise ArgumentError(f"expected {K} per-action fields, got {len(seq)}")
            return np.stack([sample_field(s, grid, trailing) for s in seq])

        return cls(grid, per_action(a, (n, n)), per_action(b, (n,)), per_action(c, ()), per_action(f, ()),
                   sample_field(g, grid), float(nu), name)

    def interior_f(self) -> np.ndarray:
        return self.f[:, self.grid.interior].T


@dataclass(frozen=True)
class ModelDiagnostics:
    min_eig: np.ndarray  # per action, smallest eigenvalue of a_k over nodes
    min_c: np.ndarray
    sup_norms: Mapping[str, float]


def validate(model: ActionModel, error_cls=ModelError) -> ModelDiagnostics:
    """Check symmetry, uniform ellipticity ``a_k >= nu/2`` and ``c_k >= 0`` at every node."""
    grid = model.grid
    a = model.a
    if a.shape != (model.K, grid.size, grid.n, grid.n):
        raise error_cls(f"diffusion field has shape {a.shape}")
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0)
    if asym > SYMMETRY_TOL * max(1.0, np.abs(a).max()):
        raise error_cls(f"diffusion matrix not symmetric (max asymmetry {asym:.3e})")
    eigs = np.linalg.eigvalsh(a)[..., 0]  # (K, N)
    bound = model.nu / 2 - ELLIPTICITY_TOL
    bad = eigs < bound
    if bad.any():
        k, node = np.unravel_index(np.argmin(np.where(bad, eigs - bound, np.inf)), bad.shape)
        raise error_cls(
            f"ellipticity violated for action {k} at node {grid.coords[node].tolist()}: "
            f"min eigenvalue {eigs[k, node]:.6g} < nu/2 = {model.nu / 2:.6g}")
    if np.any(model.c < 0):
        k, node = np.unravel_index(np.argmin(model.c), model.c.shape)
        raise error_cls(f"negative discount for action {k} at node {grid.coords[node].tolist()}")
    for name in ("b", "f", "g"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise error_cls(f"non-finite values in {name}")
    sup = {
        "a": float(np.abs(a).max()),
        "b": float(np.abs(model.b).max(initial=0.0)),
        "c": float(np.abs(model.c).max()),
        "f": float(np.abs(model.f).max()),
        "g": float(np.abs(model.g).max()),
    }
    return ModelDiagnostics(eigs.min(axis=1), model.c.min(axis=1), sup)


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """Coefficient directions ``delta theta``; shapes match :class:`ActionModel`."""

    da: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    df: np.ndarray
    dg: np.ndarray

    @classmethod
    def zeros(cls, model: ActionModel):
        return cls(np.zeros_like(model.a), np.zeros_like(model.b), np.zeros_like(model.c),
                   np.zeros_like(model.f), np.zeros_like(model.g))

    @classmethod
    def from_fields(cls, model: ActionModel, *, da=None, db=None, dc=None, df=None, dg=None):
        """Per-action deltas given as ``{action_index: field_spec}`` (0-based)."""
        spec = cls.zeros(model)
        grid, n = model.grid, model.n
        for arr, items, trailing in ((spec.da, da, (n, n)), (spec.db, db, (n,)),
                                     (spec.dc, dc, ()), (spec.df, df, ())):
            for k, v in (items or {}).items():
                if not 0 <= k < model.K:
                    raise ArgumentError(f"action index {k} out of range")
                arr[k] = sample_field(v, grid, trailing)
        if dg is not None:
            spec.dg[:] = sample_field(dg, grid)
        return spec

    def scaled(self, t: float) -> "PerturbationSpec":
        return PerturbationSpec(t * self.da, t * self.db, t * self.dc, t * self.df, t * self.dg)

    def is_zero(self) -> bool:
        return not any(np.any(x) for x in (self.da, self.db, self.dc, self.df, self.dg))


def apply_perturbation(base: ActionModel, spec: PerturbationSpec, t: float) -> ActionModel:
    """Model with coefficients ``base + t * delta``, re-validated."""
    for name, d in (("a", spec.da), ("b", spec.db), ("c", spec.dc), ("f", spec.df), ("g", spec.dg)):
        if d.shape != getattr(base, name).shape:
            raise ArgumentError(f"perturbation of {name} has shape {d.shape}")
    t = float(t)
    out = replace(base, a=base.a + t * spec.da, b=base.b + t * spec.db, c=base.c + t * spec.dc,
                  f=base.f + t * spec.df, g=base.g + t * spec.dg)
    validate(out, error_cls=PerturbationError)
    return out


# ---------------------------------------------------------------------------
# discrete Hölder norms


@dataclass(frozen=True)
class DiscreteNormReport:
    sup_norms: tuple  # sum over multi-indices of sup |D^alpha u|, orders 0..order
    holder_seminorm: float
    combined: float


def _second_difference(F, h, axis):
    """Centred second difference; second-order one-sided at the ends."""
    m = F.shape[axis]
    F = np.moveaxis(F, axis, 0)
    out = np.empty_like(F)
    out[1:-1] = (F[2:] - 2 * F[1:-1] + F[:-2]) / h**2
    if m >= 4:
        out[0] = (2 * F[0] - 5 * F[1] + 4 * F[2] - F[3]) / h**2
        out[-1] = (2 * F[-1] - 5 * F[-2] + 4 * F[-3] - F[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def _derivatives(F, h, order):
    """Arrays of ``D^alpha F`` for every multi-index with ``|alpha| == order``."""
    n = F.ndim
    if order == 0:
        return [F]
    if order == 1:
        return [np.gradient(F, h[i], axis=i, edge_order=2) for i in range(n)]
    out = []
    for i in range(n):
        for j in range(i, n):
            if i == j:
                out.append(_second_difference(F, h[i], i))
            else:
                out.append(np.gradient(np.gradient(F, h[i], axis=i, edge_order=2),
                                       h[j], axis=j, edge_order=2))
    return out


def holder_seminorm(values, coords, beta, chunk=1024) -> float:
    """Exact ``max |v(x) - v(y)| / |x - y|^beta`` over all node pairs."""
    values = np.asarray(values, dtype=float).ravel()
    coords = np.asarray(coords, dtype=float).reshape(values.size, -1)
    best = 0.0
    for start in range(0, values.size, chunk):
        sl = slice(start, start + chunk)
        dist = np.sqrt(((coords[sl, None, :] - coords[None, :, :]) ** 2).sum(axis=2))
        diff = np.abs(values[sl, None] - values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, diff / dist**beta, 0.0)
        best = max(best, float(q.max(initial=0.0)))
    return best


def discrete_norm(field, grid: Grid, order: int, beta: float = 0.5, *, region="all") -> DiscreteNormReport:
    """Discrete analogue of the ``C^{order,beta}`` norm of a grid function.

    ``region="interior"`` treats ``field`` as living on the interior nodes
    only (e.g. a control field); derivatives are then taken on that tensor
    subgrid.
    """
    if order not in (0, 1, 2):
        raise ArgumentError("order must be 0, 1 or 2")
    if not 0 < beta <= 1:
        raise ArgumentError("beta must lie in (0, 1]")
    if region == "all":
        shape, mask = grid.shape, slice(None)
    elif region == "interior":
        shape, mask = grid.interior_shape, grid.interior
    else:
        raise ArgumentError(f"unknown region {region!r}")
    F = np.asarray(field, dtype=float).reshape(shape)
    coords = grid.coords[mask]
    sups = []
    for j in range(order + 1):
        sups.append(float(sum(np.abs(D).max() for D in _derivatives(F, grid.h, j))))
    semi = float(sum(holder_seminorm(D, coords, beta) for D in _derivatives(F, grid.h, order)))
    return DiscreteNormReport(tuple(sups), semi, float(sum(sups) + semi))


def perturbation_size(base: ActionModel, perturbed: ActionModel, beta: float = 0.5) -> float:
    """Discrete size of a coefficient perturbation.

    ``max_{i,j,k} (|da^{ij}_k|_b + |db^i_k|_b + |dc_k|_b + |df_k|_b) + |dg|_{2,b}``
    where ``|.|_b`` is the ``C^{0,beta}`` norm and ``|.|_{2,b}`` the
    ``C^{2,beta}`` norm on the grid.
    """
    grid = base.grid
    if perturbed.grid != grid or perturbed.K != base.K:
        raise ArgumentError("models live on different grids or action sets")

    def norm0(v):
        return discrete_norm(v, grid, 0, beta).combined if np.any(v) else 0.0

    da, db = perturbed.a - base.a, perturbed.b - base.b
    dc, df = perturbed.c - base.c, perturbed.f - base.f
    n = grid.n
    worst = 0.0
    for k in range(base.K):
        ck = norm0(dc[k]) + norm0(df[k])
        na = [[norm0(da[k, :, i, j]) for j in range(n)] for i in range(n)]
        nb = [norm0(db[k, :, i]) for i in range(n)]
        for i in range(n):
            for j in range(n):
                worst = max(worst, na[i][j] + nb[i] + ck)
    dg = perturbed.g - base.g
    gnorm = discrete_norm(dg, grid, 2, beta).combined if np.any(dg) else 0.0
    return worst + gnorm
