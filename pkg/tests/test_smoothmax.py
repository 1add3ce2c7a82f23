import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relaxhjb import smoothmax as sm
from relaxhjb.errors import ArgumentError, CapabilityError

from .conftest import SMOOTH_KINDS


# scalar reference implementations, written from the closed forms


def ref_pair(kind, p, q):
    if kind == "chks":
        return (math.sqrt((p - q) ** 2 + 1) + p + q) / 2
    d = p - q
    if d >= 0.5:
        return p
    if d <= -0.5:
        return q
    return -d**4 / 2 + 3 * d**2 / 4 + (p + q) / 2 + 3 / 32


def ref_tree(kind, xs):
    if len(xs) == 1:
        return xs[0]
    k0 = (len(xs) + 1) // 2
    return ref_pair(kind, ref_tree(kind, xs[:k0]), ref_tree(kind, xs[k0:]))


def ref_H(kind, xs):
    if kind == "entropy":
        return math.log(sum(math.exp(v) for v in xs))
    return ref_tree(kind, list(xs))


finite = st.floats(-50, 50, allow_nan=False)


def vec(K):
    return arrays(np.float64, (K,), elements=finite)


# ---------------------------------------------------------------------------
# construction


@pytest.mark.paper
def test_zang_two_actions_constants():
    fam = sm.build_family("zang", 2)
    assert fam.theta_sloc == 0.5
    assert fam.c0 == 3 / 32


@pytest.mark.paper
def test_entropy_constant_is_log_k():
    assert sm.build_family("entropy", 3).c0 == pytest.approx(1.0986122886681098, abs=1e-15)


@pytest.mark.paper
@pytest.mark.parametrize("K", [2, 3, 5, 8, 13])
def test_printed_constants(K):
    assert sm.build_family("chks", K).c0 == pytest.approx((math.log2(K - 1) + 1) / 2)
    assert sm.build_family("zang", K).c0 == pytest.approx(3 * (math.log2(K - 1) + 1) / 32)
    assert sm.build_family("entropy", K).theta_sloc is None
    assert sm.build_family("chks", K).theta_sloc is None
    assert sm.build_family("max", K).c0 == 0.0


@pytest.mark.derived
@pytest.mark.parametrize("K", [2, 3, 4, 5, 7, 8, 16])
def test_tree_partitions_coordinates(K):
    fam = sm.build_family("zang", K)
    assert fam.tree.leaves() == list(range(K))
    node = fam.tree
    assert node.left.size == (K + 1) // 2


@pytest.mark.paper
def test_zang_theta_values():
    assert sm.build_family("zang", 3).theta_sloc == pytest.approx(19 / 32)
    assert sm.build_family("zang", 4).theta_sloc == pytest.approx(19 / 32)
    assert sm.build_family("zang", 5).theta_sloc == pytest.approx(0.6875)


@pytest.mark.derived
@pytest.mark.parametrize("K", [2, 3, 4])
def test_zang_theta_by_sampling(K, rng):
    fam = sm.build_family("zang", K)
    theta = fam.theta_sloc
    X = rng.normal(size=(100_000, K)) * 2
    k = rng.integers(0, K, size=X.shape[0])
    others = np.where(np.arange(K) == k[:, None], -np.inf, X).max(axis=1)
    X[np.arange(X.shape[0]), k] = others + theta + rng.exponential(0.3, X.shape[0])
    assert np.abs(sm.eval_H(fam, X) - X.max(axis=1)).max() <= 1e-12


@pytest.mark.paper
def test_zang_theta_is_attained_for_two_actions():
    fam = sm.build_family("zang", 2)
    assert sm.eval_H(fam, np.array([0.49, 0.0])) > 0.49


@pytest.mark.trivial
@pytest.mark.parametrize("kind,K", [("chks", 1), ("zang", 1), ("entropy", 0), ("max", -2)])
def test_invalid_K(kind, K):
    with pytest.raises(ArgumentError):
        sm.build_family(kind, K)


@pytest.mark.trivial
def test_unknown_kind():
    with pytest.raises(ValueError):
        sm.build_family("softplus", 3)


# ---------------------------------------------------------------------------
# values


@pytest.mark.derived
def test_closed_form_values():
    assert sm.eval_H(sm.build_family("entropy", 3), np.zeros(3)) == pytest.approx(math.log(3))
    assert sm.eval_H(sm.build_family("chks", 2), np.zeros(2)) == 0.5
    zang = sm.build_family("zang", 2)
    assert sm.eval_H(zang, np.zeros(2)) == 3 / 32
    assert sm.eval_H(zang, np.array([1.0, 0.0])) == 1.0


@pytest.mark.derived
@pytest.mark.parametrize("kind", ["entropy", "chks", "zang"])
@pytest.mark.parametrize("K", [2, 3, 4, 6])
def test_matches_scalar_reference(kind, K, rng):
    fam = sm.build_family(kind, K)
    X = rng.normal(size=(200, K)) * 0.7
    expect = np.array([ref_H(kind, row) for row in X])
    np.testing.assert_allclose(sm.eval_H(fam, X), expect, rtol=1e-13, atol=1e-13)


@pytest.mark.derived
def test_entropy_overflow_safe():
    fam = sm.build_family("entropy", 3)
    assert sm.eval_H(fam, np.array([1e300, 0.0, -1e300])) == 1e300
    assert math.isfinite(sm.eval_H_eps(fam, 1e-8, np.array([5.0, 4.0, 3.0])))


@pytest.mark.derived
def test_eps_zero_is_max():
    fam = sm.build_family("zang", 3)
    x = np.array([0.3, -1.0, 0.31])
    assert sm.eval_H_eps(fam, 0.0, x) == 0.31


@pytest.mark.trivial
def test_nonfinite_input_rejected():
    with pytest.raises(ArgumentError):
        sm.eval_H(sm.build_family("entropy", 2), np.array([np.nan, 0.0]))


@pytest.mark.trivial
def test_shape_mismatch_rejected():
    with pytest.raises(ArgumentError):
        sm.eval_H(sm.build_family("entropy", 2), np.zeros(3))


@pytest.mark.trivial
def test_max_has_no_gradient():
    fam = sm.build_family("max", 3)
    with pytest.raises(CapabilityError):
        sm.grad_H_eps(fam, 1.0, np.zeros(3))


@pytest.mark.trivial
def test_gradient_needs_positive_eps():
    with pytest.raises(ArgumentError):
        sm.grad_H_eps(sm.build_family("entropy", 2), 0.0, np.zeros(2))
    with pytest.raises(ArgumentError):
        sm.eval_H_eps(sm.build_family("entropy", 2), -1.0, np.zeros(2))


@pytest.mark.trivial
def test_batch_shapes():
    fam = sm.build_family("chks", 3)
    X = np.zeros((4, 5, 3))
    assert sm.eval_H_eps(fam, 0.5, X).shape == (4, 5)
    assert sm.grad_H_eps(fam, 0.5, X).shape == (4, 5, 3)
    assert sm.hess_H_eps(fam, 0.5, X).shape == (4, 5, 3, 3)


@pytest.mark.derived
def test_entropy_hessian_two_actions():
    fam = sm.build_family("entropy", 2)
    np.testing.assert_allclose(sm.hess_H_eps(fam, 1.0, np.zeros(2)),
                               [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


@pytest.mark.derived
def test_chks_gradient_at_origin():
    np.testing.assert_allclose(sm.grad_H_eps(sm.build_family("chks", 2), 1.0, np.zeros(2)), [0.5, 0.5])


# ---------------------------------------------------------------------------
# properties


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
@pytest.mark.parametrize("K", [2, 3, 5])
@settings(max_examples=60, deadline=None)
@given(data=st.data(), eps=st.sampled_from([1.0, 0.3, 0.01]))
def test_sandwich_and_simplex(kind, K, data, eps):
    fam = sm.build_family(kind, K)
    x = data.draw(vec(K))
    h = sm.eval_H_eps(fam, eps, x)
    assert h - eps * fam.c0 - 1e-9 <= x.max() <= h + 1e-9
    g = sm.grad_H_eps(fam, eps, x)
    assert np.all(g >= 0) and abs(g.sum() - 1) <= 1e-10


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
@settings(max_examples=60, deadline=None)
@given(data=st.data(), shift=finite)
def test_translation_equivariance(kind, data, shift):
    fam = sm.build_family(kind, 4)
    x = data.draw(vec(4))
    assert sm.eval_H_eps(fam, 0.5, x + shift) == pytest.approx(sm.eval_H_eps(fam, 0.5, x) + shift,
                                                                abs=1e-9)


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_one_lipschitz_and_convex(kind, data):
    fam = sm.build_family(kind, 3)
    x, y = data.draw(vec(3)), data.draw(vec(3))
    hx, hy = sm.eval_H_eps(fam, 0.2, x), sm.eval_H_eps(fam, 0.2, y)
    assert abs(hx - hy) <= np.linalg.norm(x - y) + 1e-9
    mid = sm.eval_H_eps(fam, 0.2, (x + y) / 2)
    assert mid <= (hx + hy) / 2 + 1e-9


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_hessian_psd_and_kills_ones(kind, data):
    fam = sm.build_family(kind, 4)
    x = data.draw(arrays(np.float64, (4,), elements=st.floats(-3, 3)))
    H = sm.hess_H_eps(fam, 0.7, x)
    np.testing.assert_allclose(H, H.T, atol=1e-12)
    assert np.linalg.eigvalsh(H).min() >= -1e-10
    np.testing.assert_allclose(H @ np.ones(4), 0.0, atol=1e-10)


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
def test_derivatives_against_finite_differences(kind, rng):
    fam = sm.build_family(kind, 5)
    eps = 0.3
    X = rng.normal(size=(50, 5)) * 0.4
    h = 1e-6
    G = sm.grad_H_eps(fam, eps, X)
    Hs = sm.hess_H_eps(fam, eps, X)
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        fd = (sm.eval_H_eps(fam, eps, X + e) - sm.eval_H_eps(fam, eps, X - e)) / (2 * h)
        np.testing.assert_allclose(G[:, i], fd, atol=1e-7)
        fdg = (sm.grad_H_eps(fam, eps, X + e) - sm.grad_H_eps(fam, eps, X - e)) / (2 * h)
        np.testing.assert_allclose(Hs[:, :, i], fdg, atol=1e-5)


# ---------------------------------------------------------------------------
# exploration cost and conjugates


@pytest.mark.derived
def test_exploration_cost_entropy_origin():
    assert sm.exploration_cost(sm.build_family("entropy", 3), 1.0, np.zeros(3)) == pytest.approx(-math.log(3))


@pytest.mark.derived
@settings(max_examples=80, deadline=None)
@given(data=st.data(), eps=st.sampled_from([2.0, 0.5, 0.05]))
def test_exploration_cost_is_scaled_negative_entropy(data, eps):
    fam = sm.build_family("entropy", 4)
    x = data.draw(vec(4))
    lam = sm.grad_H_eps(fam, eps, x)
    assert sm.exploration_cost(fam, eps, x) == pytest.approx(eps * sm.rho_entropy(lam), abs=1e-9)


@pytest.mark.derived
@pytest.mark.parametrize("kind", SMOOTH_KINDS)
@settings(max_examples=60, deadline=None)
@given(data=st.data(), eps=st.sampled_from([1.0, 0.1]))
def test_exploration_cost_range(kind, data, eps):
    fam = sm.build_family(kind, 3)
    x = data.draw(vec(3))
    cost = sm.exploration_cost(fam, eps, x)
    assert -eps * fam.c0 - 1e-9 <= cost <= 1e-12


@pytest.mark.derived
def test_rho_entropy_values():
    assert sm.rho_entropy(np.full(3, 1 / 3)) == pytest.approx(-math.log(3))
    assert sm.rho_entropy(np.array([1.0, 0.0, 0.0])) == 0.0


@pytest.mark.derived
def test_as_simplex_clamps_roundoff():
    out = sm.as_simplex(np.array([1.0 + 5e-13, -5e-13]))
    assert out[1] == 0.0 and out.sum() == 1.0
    with pytest.raises(ArgumentError):
        sm.as_simplex(np.array([1.1, -0.1]))


# ---------------------------------------------------------------------------
# max, subdifferential and S_loc


@pytest.mark.derived
def test_subdiff_active_sets():
    assert sm.subdiff_H0(np.array([1.0, 1.0, 0.0])) == {0, 1}
    assert sm.subdiff_H0(np.array([0.0, 2.0, 1.0])) == {1}
    assert sm.subdiff_H0(np.array([1.0, 1.0 - 1e-12, 0.0]), tol=1e-9) == {0, 1}
    with pytest.raises(ArgumentError):
        sm.subdiff_H0(np.zeros(2), tol=0.0)


@pytest.mark.derived
def test_argmax_unit_prefers_lowest_index():
    np.testing.assert_array_equal(sm.argmax_unit(np.array([[1.0, 1.0], [0.0, 2.0]])),
                                  [[1.0, 0.0], [0.0, 1.0]])


@pytest.mark.derived
def test_top_gap():
    np.testing.assert_allclose(sm.top_gap(np.array([[3.0, 1.0, 2.5], [0.0, 0.0, 0.0]])), [0.5, 0.0])


@pytest.mark.derived
def test_sloc_holds_at():
    fam = sm.build_family("zang", 2)
    assert sm.sloc_holds_at(fam, 1.0, np.array([0.5, 0.0]))
    assert not sm.sloc_holds_at(fam, 1.0, np.array([0.4, 0.0]))
    assert sm.sloc_holds_at(fam, 0.5, np.array([0.25, 0.0]))
    with pytest.raises(CapabilityError):
        sm.sloc_holds_at(sm.build_family("entropy", 2), 1.0, np.zeros(2))


@pytest.mark.paper
@pytest.mark.parametrize("K", [2, 3, 4, 5, 8])
def test_sloc_gives_unit_gradient(K, rng):
    fam = sm.build_family("zang", K)
    X = rng.normal(size=(2000, K))
    X[:, 0] = X[:, 1:].max(axis=1) + 0.2 * fam.theta_sloc + rng.random(2000)
    held = sm.sloc_holds_at(fam, 0.2, X)
    assert held.all()
    G = sm.grad_H_eps(fam, 0.2, X)
    assert np.array_equal(G, np.tile(np.eye(K)[0], (2000, 1)))
