import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relaxhjb import smoothmax as sm
from relaxhjb.discretize import build_grid
from relaxhjb.errors import ArgumentError, NotPSDError, SimulationError
from relaxhjb.model import ActionModel
from relaxhjb.problems import make_problem
from relaxhjb.simulate import mixed_coefficients, psd_sqrt, simulate_value
from relaxhjb.solver import solve_hjb


@pytest.mark.derived
def test_psd_sqrt_examples():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


@pytest.mark.derived
def test_psd_sqrt_clamps_tiny_negative():
    S = psd_sqrt(np.diag([1.0, -1e-14]))
    np.testing.assert_allclose(S, np.diag([1.0, 0.0]))


@pytest.mark.trivial
def test_psd_sqrt_rejects():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -1e-3]))
    with pytest.raises(ArgumentError):
        psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


@pytest.mark.derived
@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (2, 2), elements=st.floats(-3, 3)))
def test_psd_sqrt_reconstructs(M):
    A = M.T @ M
    S = psd_sqrt(A)
    np.testing.assert_allclose(S, S.T, atol=0)
    np.testing.assert_allclose(S @ S, A, atol=1e-10 * max(1.0, np.abs(A).max()))
    assert np.linalg.eigvalsh(S).min() >= -1e-12


@pytest.mark.derived
def test_mixed_coefficients_pure_action():
    m = make_problem("box-2d", nodes=7)
    lam = np.tile([0.0, 1.0], (25, 1))
    mix = mixed_coefficients(m, lam)
    np.testing.assert_allclose(mix.sigma_mixed @ mix.sigma_mixed, 2 * m.a[1, m.grid.interior], atol=1e-12)
    np.testing.assert_allclose(mix.b_mixed, m.b[1, m.grid.interior])


@pytest.mark.derived
def test_mixed_coefficients_scalar_example():
    g = build_grid((0, 1), 5)
    m = ActionModel.from_fields(g, 2.0, a=[1.0, 2.0], b=[1.0, -3.0])
    mix = mixed_coefficients(m, np.full((3, 2), 0.5))
    np.testing.assert_allclose(mix.sigma_mixed[:, 0, 0], math.sqrt(3.0))
    np.testing.assert_allclose(mix.b_mixed[:, 0], -1.0)


@pytest.mark.derived
@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2).filter(lambda w: sum(w) > 1e-3))
def test_mixture_keeps_ellipticity(w):
    m = make_problem("box-2d", nodes=5)
    lam = np.tile(np.array(w) / sum(w), (9, 1))
    S = mixed_coefficients(m, lam).sigma_mixed
    cov = np.einsum("mk,kmij->mij", lam, 2 * m.a[:, m.grid.interior])
    np.testing.assert_allclose(S @ S, cov, atol=1e-10)
    assert np.linalg.eigvalsh(S).min() >= math.sqrt(m.nu) - 1e-9


@pytest.mark.trivial
def test_mixed_coefficients_rejects_non_simplex():
    m = make_problem("two-action-gap", nodes=5)
    with pytest.raises(ArgumentError):
        mixed_coefficients(m, np.full((3, 2), 0.6))


@pytest.mark.derived
def test_constant_exit_reward_is_exact():
    g = build_grid((0, 1), 21)
    m = ActionModel.from_fields(g, 2.0, a=1.0, f=0.0, g=2.5)
    s = solve_hjb(m, sm.build_family("entropy", 1), 0.0)
    est = simulate_value(m, s, [0.3], 200, 1e-3, seed=4)
    assert est.mean == 2.5 and est.stderr == 0.0


@pytest.mark.trivial
def test_seed_determinism():
    m = make_problem("uniform-f", nodes=41, K=2)
    s = solve_hjb(m, sm.build_family("entropy", 2), 0.2)
    a = simulate_value(m, s, [0.4], 500, 1e-3, seed=11)
    b = simulate_value(m, s, [0.4], 500, 1e-3, seed=11)
    c = simulate_value(m, s, [0.4], 500, 1e-3, seed=12)
    assert a == b and a.mean != c.mean


@pytest.mark.derived
def test_two_action_gap_unregularized():
    m = make_problem("two-action-gap", nodes=101)
    s = solve_hjb(m, sm.build_family("zang", 2), 0.0)
    est = simulate_value(m, s, [0.5], 10_000, 1e-4, seed=3)
    assert abs(est.mean - 0.125) <= 3 * est.stderr


@pytest.mark.derived
def test_discounted_two_dimensional_run():
    m = make_problem("box-2d", nodes=21)
    from dataclasses import replace
    m = replace(m, c=np.full_like(m.c, 0.5))
    s = solve_hjb(m, sm.build_family("entropy", 2), 0.1)
    est = simulate_value(m, s, [0.5, 0.5], 4000, 4e-4, seed=5)
    u0 = s.u[m.grid.nearest_node([0.5, 0.5])[0]]
    assert abs(est.mean - u0) <= 4 * est.stderr + 2e-3


@pytest.mark.trivial
def test_invalid_start_and_step_cap():
    m = make_problem("uniform-f", nodes=21, K=2)
    s = solve_hjb(m, sm.build_family("entropy", 2), 0.1)
    with pytest.raises(ArgumentError):
        simulate_value(m, s, [1.0], 10, 1e-3, seed=0)
    with pytest.raises(ArgumentError):
        simulate_value(m, s, [0.5, 0.5], 10, 1e-3, seed=0)
    with pytest.raises(SimulationError):
        simulate_value(m, s, [0.5], 10, 1e-6, seed=0, max_steps=5)
