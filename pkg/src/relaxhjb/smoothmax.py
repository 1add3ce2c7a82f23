"""Smooth approximations of the pointwise maximum over K actions.

A generator ``H`` is a convex C^2 function with ``H(x) - c0 <= max(x) <= H(x)``.
Its scaled family ``H_eps(x) = eps * H(x / eps)`` (``max`` at ``eps = 0``)
is the Hamiltonian of the exploration-regularized HJB equation, and
``grad H_eps`` is the optimal relaxed control.

Three generators are provided:

* ``ENTROPY``: ``log(sum(exp(x)))``, conjugate to the Shannon entropy.
* ``CHKS``: recursive composition of ``(sqrt((p - q)**2 + 1) + p + q) / 2``.
* ``ZANG``: recursive composition of a piecewise quartic that equals the
  exact max once one argument leads by 1/2.

All array functions act on the last axis, so ``x`` may have shape ``(K,)``
or ``(M, K)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .errors import ArgumentError, CapabilityError

SIMPLEX_CLAMP = 1e-12
DEFAULT_TIE_TOL = 1e-9


class GeneratorKind(str, enum.Enum):
    MAX = "max"
    ENTROPY = "entropy"
    CHKS = "chks"
    ZANG = "zang"


@dataclass(frozen=True)
class TreeNode:
    """Node of the binary composition tree over coordinates ``lo..hi-1``.

    ``theta`` is the S_loc constant of the subtree and ``excess`` the bound
    on ``H_sub - max`` obtained from the composition rule.
    """

    lo: int
    hi: int
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    theta: float = 0.0
    excess: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def size(self) -> int:
        return self.hi - self.lo

    def leaves(self):
        if self.is_leaf:
            return [self.lo]
        return self.left.leaves() + self.right.leaves()


@dataclass(frozen=True)
class SmoothMaxFamily:
    kind: GeneratorKind
    K: int
    c0: float
    theta_sloc: Optional[float]
    tree: Optional[TreeNode] = None

    @property
    def has_sloc(self) -> bool:
        return self.theta_sloc is not None


# pair primitive: bump on top of the max, and its S_loc constant
_PAIR_EXCESS = {GeneratorKind.CHKS: 0.5, GeneratorKind.ZANG: 3.0 / 32.0}
_PAIR_THETA = {GeneratorKind.ZANG: 0.5}


def _build_tree(kind, lo, hi):
    if hi - lo == 1:
        return TreeNode(lo, hi)
    k0 = (hi - lo + 1) // 2
    left = _build_tree(kind, lo, lo + k0)
    right = _build_tree(kind, lo + k0, hi)
    excess = _PAIR_EXCESS[kind] + max(left.excess, right.excess)
    theta = math.nan
    if kind in _PAIR_THETA:
        t1 = _PAIR_THETA[kind]
        theta = max(left.theta, right.theta, left.excess + t1, right.excess + t1)
    return TreeNode(lo, hi, left, right, theta, excess)


def build_family(kind, K: int) -> SmoothMaxFamily:
    """Construct a generator family for ``K`` actions.

    Tree-based generators split coordinates at ``K0 = (K + 1) // 2``
    recursively; a subtree of one coordinate is the identity.
    """
    kind = GeneratorKind(kind)
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ArgumentError(f"K must be a positive integer, got {K!r}")
    K = int(K)
    if kind is GeneratorKind.MAX:
        return SmoothMaxFamily(kind, K, 0.0, 0.0)
    if kind is GeneratorKind.ENTROPY:
        return SmoothMaxFamily(kind, K, math.log(K), None)
    if K < 2:
        raise ArgumentError(f"{kind.value} generator needs K >= 2, got {K}")
    tree = _build_tree(kind, 0, K)
    if kind is GeneratorKind.CHKS:
        c0 = (math.log2(K - 1) + 1.0) / 2.0
        return SmoothMaxFamily(kind, K, c0, None, tree)
    c0 = 3.0 * (math.log2(K - 1) + 1.0) / 32.0
    return SmoothMaxFamily(kind, K, c0, tree.theta, tree)


# ---------------------------------------------------------------------------
# two-dimensional primitives, vectorized over the leading axis


def _pair_chks(p, q, order):
    d = p - q
    s = np.sqrt(d * d + 1.0)
    val = 0.5 * (s + p + q)
    if order == 0:
        return val, None, None
    gp = 0.5 * (1.0 + d / s)
    gq = 0.5 * (1.0 - d / s)
    if order == 1:
        return val, (gp, gq), None
    w = 0.5 / (s * s * s)
    return val, (gp, gq), (w, -w, w)


def _pair_zang(p, q, order):
    d = p - q
    left = d >= 0.5
    right = d <= -0.5
    mid = ~(left | right)
    dm = np.where(mid, d, 0.0)
    d2 = dm * dm
    quartic = -0.5 * d2 * d2 + 0.75 * d2 + 0.5 * (p + q) + 3.0 / 32.0
    val = np.where(left, p, np.where(right, q, quartic))
    if order == 0:
        return val, None, None
    slope = -2.0 * d2 * dm + 1.5 * dm
    gp = np.where(left, 1.0, np.where(right, 0.0, slope + 0.5))
    gq = np.where(left, 0.0, np.where(right, 1.0, 0.5 - slope))
    if order == 1:
        return val, (gp, gq), None
    curv = np.where(mid, 1.5 - 6.0 * d2, 0.0)
    return val, (gp, gq), (curv, -curv, curv)


_PAIRS = {GeneratorKind.CHKS: _pair_chks, GeneratorKind.ZANG: _pair_zang}


def _tree_eval(pair, node, X, order):
    """Value, gradient (M, size) and Hessian (M, size, size) of a subtree."""
    M = X.shape[0]
    if node.is_leaf:
        val = X[:, node.lo]
        grad = np.ones((M, 1)) if order >= 1 else None
        hess = np.zeros((M, 1, 1)) if order >= 2 else None
        return val, grad, hess
    vl, gl, hl = _tree_eval(pair, node.left, X, order)
    vr, gr, hr = _tree_eval(pair, node.right, X, order)
    val, g2, h2 = pair(vl, vr, order)
    if order == 0:
        return val, None, None
    gp, gq = g2
    grad = np.concatenate([gp[:, None] * gl, gq[:, None] * gr], axis=1)
    if order == 1:
        return val, grad, None
    hpp, hpq, hqq = h2
    nl = node.left.size
    hess = np.empty((M, node.size, node.size))
    hess[:, :nl, :nl] = hpp[:, None, None] * gl[:, :, None] * gl[:, None, :] + gp[:, None, None] * hl
    hess[:, nl:, nl:] = hqq[:, None, None] * gr[:, :, None] * gr[:, None, :] + gq[:, None, None] * hr
    cross = hpq[:, None, None] * gl[:, :, None] * gr[:, None, :]
    hess[:, :nl, nl:] = cross
    hess[:, nl:, :nl] = np.swapaxes(cross, 1, 2)
    return val, grad, hess


# ---------------------------------------------------------------------------
# unscaled generator


def _as_batch(family, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != family.K:
        raise ArgumentError(f"expected last axis of length {family.K}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("non-finite input")
    return x.reshape(-1, family.K), x.shape[:-1]


def _generator(family, X, order):
    kind = family.kind
    if kind is GeneratorKind.MAX:
        if order > 0:
            raise CapabilityError("the pointwise max has no gradient; use subdiff_H0")
        return X.max(axis=1), None, None
    if kind is GeneratorKind.ENTROPY:
        m = X.max(axis=1, keepdims=True)
        z = np.exp(X - m)
        s = z.sum(axis=1, keepdims=True)
        val = (m + np.log(s))[:, 0]
        if order == 0:
            return val, None, None
        p = z / s
        if order == 1:
            return val, p, None
        hess = -p[:, :, None] * p[:, None, :]
        idx = np.arange(family.K)
        hess[:, idx, idx] += p
        return val, p, hess
    return _tree_eval(_PAIRS[kind], family.tree, X, order)


def eval_H(family: SmoothMaxFamily, x):
    """Evaluate the unscaled generator ``H(x)``."""
    X, shape = _as_batch(family, x)
    return _generator(family, X, 0)[0].reshape(shape)


# ---------------------------------------------------------------------------
# scaled family


def _check_eps(eps, allow_zero):
    eps = float(eps)
    if not math.isfinite(eps) or eps < 0 or (eps == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ArgumentError(f"eps must be {bound}, got {eps}")
    return eps


def as_simplex(w, clamp=SIMPLEX_CLAMP):
    """Project round-off off a batch of probability vectors.

    Entries in ``[-clamp, 0)`` are set to zero and rows renormalized; any
    larger violation is an error.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < -clamp):
        raise ArgumentError(f"vector leaves the simplex: min entry {w.min():.3e}")
    w = np.where(w < 0, 0.0, w)
    w = w / w.sum(axis=-1, keepdims=True)
    return np.minimum(w, 1.0)


def eval_H_eps(family: SmoothMaxFamily, eps, x):
    eps = _check_eps(eps, allow_zero=True)
    X, shape = _as_batch(family, x)
    if eps == 0.0:
        return X.max(axis=1).reshape(shape)
    return (eps * _generator(family, X / eps, 0)[0]).reshape(shape)


def grad_H_eps(family: SmoothMaxFamily, eps, x):
    """Optimal relaxed control ``grad H_eps(x) = grad H(x / eps)``, on the simplex."""
    eps = _check_eps(eps, allow_zero=False)
    X, shape = _as_batch(family, x)
    g = _generator(family, X / eps, 1)[1]
    return as_simplex(g).reshape(shape + (family.K,))


def hess_H_eps(family: SmoothMaxFamily, eps, x):
    eps = _check_eps(eps, allow_zero=False)
    X, shape = _as_batch(family, x)
    h = _generator(family, X / eps, 2)[2] / eps
    return h.reshape(shape + (family.K, family.K))


def value_and_grad(family: SmoothMaxFamily, eps, x):
    """``(H_eps(x), grad H_eps(x))`` from a single tree traversal."""
    eps = _check_eps(eps, allow_zero=False)
    X, shape = _as_batch(family, x)
    val, g, _ = _generator(family, X / eps, 1)
    return (eps * val).reshape(shape), as_simplex(g).reshape(shape + (family.K,))


def exploration_cost(family: SmoothMaxFamily, eps, x):
    """``eps * rho(grad H_eps(x))`` via the conjugate identity ``x.grad - H_eps(x)``.

    The value lies in ``[-eps * c0, 0]``. Rows are shifted by their max
    first; the identity is invariant under that shift because the gradient
    sums to one.
    """
    eps = _check_eps(eps, allow_zero=False)
    X, shape = _as_batch(family, x)
    X = X - X.max(axis=1, keepdims=True)
    val, g, _ = _generator(family, X / eps, 1)
    g = as_simplex(g)
    return (np.einsum("mk,mk->m", X, g) - eps * val).reshape(shape)


def rho_entropy(lam):
    """Negative Shannon entropy ``sum(lam * log(lam))`` with ``0 log 0 = 0``."""
    lam = np.asarray(lam, dtype=float)
    return xlogy(lam, lam).sum(axis=-1)


def subdiff_H0(x, tol=DEFAULT_TIE_TOL):
    """Active set ``{k : x_k >= max(x) - tol}`` (0-based) of the pointwise max.

    The subdifferential of the max at ``x`` is the convex hull of the unit
    vectors indexed by this set.
    """
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    x = np.asarray(x, dtype=float)
    return frozenset(int(k) for k in np.flatnonzero(x >= x.max() - tol))


def argmax_unit(x, tol=DEFAULT_TIE_TOL):
    """Lowest-index near-maximal unit vector per row (deterministic selection)."""
    x = np.asarray(x, dtype=float)
    active = x >= x.max(axis=-1, keepdims=True) - tol
    k = np.argmax(active, axis=-1)
    out = np.zeros(x.shape)
    np.put_along_axis(out, k[..., None], 1.0, axis=-1)
    return out


def top_gap(x):
    """Difference between the largest and second-largest entry of each row."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        return np.full(x.shape[:-1], np.inf)
    part = np.partition(x, -2, axis=-1)
    return part[..., -1] - part[..., -2]


def sloc_holds_at(family: SmoothMaxFamily, eps, x):
    """Whether some coordinate leads all others by ``eps * theta_sloc``.

    Where this holds, ``H_eps`` coincides with the max and its gradient is
    the corresponding unit vector.
    """
    if not family.has_sloc:
        raise CapabilityError(f"{family.kind.value} generator has no S_loc constant")
    eps = _check_eps(eps, allow_zero=False)
    X, shape = _as_batch(family, x)
    out = top_gap(X) >= eps * family.theta_sloc
    return out.reshape(shape) if shape else bool(out[0])
