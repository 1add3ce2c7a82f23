"""Uniform box grids and monotone finite-difference stencils for ``L_k``.

``L_k u = a^{ij} d_ij u + b^i d_i u - c u``. Second derivatives use the
centred three-point stencil, first derivatives are upwinded along the drift,
and the 2D cross term uses the seven-point stencil whose diagonal pair
follows the sign of ``a^{12}``. Every assembled row then has nonnegative
off-diagonal entries and a row sum of ``-c``, so mixtures of the operators
obey a discrete maximum principle.

Operators are stored as sparse ``(n_interior, n_nodes)`` matrices; Dirichlet
data enter through the boundary columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, DiscretizationError


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    shape: tuple

    @property
    def n(self) -> int:
        return len(self.shape)

    @cached_property
    def h(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / (np.array(self.shape) - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def axes(self):
        return [np.linspace(l, u, m) for l, u, m in zip(self.lo, self.hi, self.shape)]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)``, C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.n] = True
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    @property
    def interior_shape(self) -> tuple:
        return tuple(m - 2 for m in self.shape)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.array(self.hi) - np.array(self.lo)))

    def nearest_node(self, x) -> np.ndarray:
        """Flat index of the node nearest to each point of ``x`` (shape ``(M, n)``)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.rint((x - np.array(self.lo)) / self.h).astype(int)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.shape)


def build_grid(domain, nodes) -> Grid:
    """Uniform tensor grid on a box.

    ``domain`` is ``(lo, hi)`` in 1D or a sequence of such pairs; ``nodes``
    is an int or one int per axis.
    """
    domain = np.asarray(domain, dtype=float)
    if domain.ndim == 1:
        domain = domain[None, :]
    if domain.ndim != 2 or domain.shape[1] != 2:
        raise ArgumentError(f"domain must be (lo, hi) pairs, got {domain.tolist()}")
    n = domain.shape[0]
    if n not in (1, 2):
        raise ArgumentError("only 1D and 2D boxes are supported")
    nodes = np.broadcast_to(np.asarray(nodes, dtype=int), (n,))
    if np.any(nodes < 3):
        raise ArgumentError(f"need at least 3 nodes per axis, got {nodes.tolist()}")
    if np.any(domain[:, 1] <= domain[:, 0]):
        raise ArgumentError(f"degenerate box {domain.tolist()}")
    return Grid(tuple(domain[:, 0].tolist()), tuple(domain[:, 1].tolist()),
                tuple(int(m) for m in nodes))


@dataclass(frozen=True)
class StencilOperator:
    k: int
    matrix: sp.csr_matrix  # (n_interior, n_nodes)

    def __matmul__(self, u):
        return self.matrix @ u


def apply(op: StencilOperator, u) -> np.ndarray:
    """``L_k u`` at interior nodes; ``u`` carries values at every node."""
    return op.matrix @ np.asarray(u, dtype=float)


def _select(sign, ref):
    """Upwind / stencil-variant selector: sign of ``sign`` where nonzero, else of ``ref``."""
    s = np.sign(sign)
    if ref is not None:
        s = np.where(s == 0, np.sign(ref), s)
    return np.where(s == 0, 1.0, s)


def stencil_matrix(grid: Grid, a, b, c, *, b_sign=None, a12_sign=None) -> sp.csr_matrix:
    """Assemble ``a:D^2 + b.D - c`` on interior rows.

    ``a`` is ``(N, n, n)``, ``b`` is ``(N, n)``, ``c`` is ``(N,)`` sampled at
    all nodes. The stencil is linear in the coefficients once the upwind
    directions and cross-stencil variants are fixed; ``b_sign`` and
    ``a12_sign`` pin them (defaults: the signs of ``b`` and ``a^{12}``
    themselves). No monotonicity check is done here.
    """
    n, shape, h = grid.n, grid.shape, grid.h
    rows_all = np.arange(grid.interior.size)
    nodes = grid.interior
    multi = np.array(np.unravel_index(nodes, shape))  # (n, Ni)
    A = np.asarray(a)[nodes]
    B = np.asarray(b)[nodes]
    C = np.asarray(c)[nodes]
    rows, cols, vals = [rows_all], [nodes], [-C]

    def add(offset, coef):
        nb = np.ravel_multi_index(tuple(multi + np.asarray(offset)[:, None]), shape)
        rows.append(rows_all)
        cols.append(nb)
        vals.append(coef)
        rows.append(rows_all)
        cols.append(nodes)
        vals.append(-coef)

    for i in range(n):
        e = np.zeros(n, dtype=int)
        e[i] = 1
        diff = A[:, i, i] / h[i] ** 2
        add(e, diff)
        add(-e, diff)
        bi = B[:, i]
        s = _select(bi if b_sign is None else np.asarray(b_sign)[nodes, i], bi)
        add(e, np.where(s > 0, bi, 0.0) / h[i])
        add(-e, np.where(s < 0, -bi, 0.0) / h[i])
    if n == 2:
        a12 = A[:, 0, 1]
        s = _select(a12 if a12_sign is None else np.asarray(a12_sign)[nodes], a12)
        w = s * a12 / (h[0] * h[1])  # |a12| / (hx hy) for the default selection
        for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            add(e, -w)
        pos = s > 0
        add((1, 1), np.where(pos, w, 0.0))
        add((-1, -1), np.where(pos, w, 0.0))
        add((1, -1), np.where(pos, 0.0, w))
        add((-1, 1), np.where(pos, 0.0, w))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(nodes.size, grid.size))
    return mat.tocsr()


def _check_cross_dominance(grid, A, k):
    if grid.n != 2:
        return
    h = grid.h
    nodes = grid.interior
    a12 = np.abs(A[nodes, 0, 1])
    margin = np.minimum(A[nodes, 0, 0] / h[0] - a12 / h[1], A[nodes, 1, 1] / h[1] - a12 / h[0])
    scale = np.max(np.abs(A[nodes]), axis=(1, 2)) / h.min()
    worst = int(np.argmin(margin / scale))
    if margin[worst] < -1e-12 * scale[worst]:
        x = grid.coords[nodes[worst]].tolist()
        raise DiscretizationError(
            f"action {k}: cross-diffusion not diagonally dominant at node {x} "
            f"(a11={A[nodes[worst], 0, 0]:.6g}, a22={A[nodes[worst], 1, 1]:.6g}, "
            f"a12={A[nodes[worst], 0, 1]:.6g})")


def check_m_matrix(mat: sp.csr_matrix, grid: Grid, atol=1e-12):
    """Raise unless rows have nonnegative off-diagonals and nonpositive sums."""
    coo = mat.tocoo()
    diag_col = grid.interior[coo.row]
    off = coo.col != diag_col
    scale = np.abs(coo.data).max(initial=1.0)
    if np.any(coo.data[off] < -atol * scale):
        raise DiscretizationError("negative off-diagonal stencil coefficient")
    if np.any(coo.data[~off] > atol * scale):
        raise DiscretizationError("positive diagonal stencil coefficient")
    if np.any(np.asarray(mat.sum(axis=1)).ravel() > atol * scale):
        raise DiscretizationError("positive row sum")


def assemble_Lk(model, k: int) -> StencilOperator:
    """Monotone discretization of the ``k``-th action operator of ``model``."""
    grid = model.grid
    A = model.a[k]
    _check_cross_dominance(grid, A, k)
    mat = stencil_matrix(grid, A, model.b[k], model.c[k])
    check_m_matrix(mat, grid)
    return StencilOperator(k, mat)


class OperatorFamily:
    """All ``K`` assembled operators of a model, split into interior/boundary blocks."""

    def __init__(self, model, ops: Sequence[StencilOperator] | None = None):
        self.model = model
        self.grid = model.grid
        self.ops = list(ops) if ops is not None else [assemble_Lk(model, k) for k in range(model.K)]
        ii, ib = self.grid.interior, self.grid.boundary
        self.interior_blocks = [op.matrix[:, ii].tocsr() for op in self.ops]
        self.boundary_blocks = [op.matrix[:, ib].tocsr() for op in self.ops]
        self.f_interior = model.f[:, ii].T.copy()  # (Ni, K)

    @property
    def K(self) -> int:
        return len(self.ops)

    def apply_all(self, u) -> np.ndarray:
        """``(L_k u)`` stacked as ``(Ni, K)``."""
        return np.stack([op.matrix @ u for op in self.ops], axis=1)

    def residual(self, u) -> np.ndarray:
        return self.apply_all(u) + self.f_interior

    def mixed(self, lam):
        """Interior and boundary blocks of ``sum_k lam_k L_k`` for ``lam`` of shape ``(Ni, K)``."""
        A_ii = sum(sp.diags(lam[:, k]) @ self.interior_blocks[k] for k in range(self.K))
        A_ib = sum(sp.diags(lam[:, k]) @ self.boundary_blocks[k] for k in range(self.K))
        return A_ii.tocsc(), A_ib.tocsr()


def residual_components(model, u, family: OperatorFamily | None = None) -> np.ndarray:
    """``L_k u + f_k`` at interior nodes, shape ``(Ni, K)``."""
    family = family or OperatorFamily(model)
    return family.residual(np.asarray(u, dtype=float))
