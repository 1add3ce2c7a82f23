import math

import numpy as np
import pytest

from relaxhjb import smoothmax as sm
from relaxhjb.discretize import build_grid
from relaxhjb.errors import ArgumentError, SolverError
from relaxhjb.model import ActionModel
from relaxhjb.problems import make_problem
from relaxhjb.solver import (SolverOptions, feedback_control, solve_hjb, solve_linear_dirichlet,
                             solve_suboptimal)


@pytest.mark.trivial
def test_options_validation():
    with pytest.raises(ArgumentError):
        SolverOptions(tolerance=0.0)
    with pytest.raises(ArgumentError):
        SolverOptions(max_iterations=0)


@pytest.mark.derived
@pytest.mark.parametrize("eps", [0.4, 0.1, 0.0])
@pytest.mark.parametrize("kind", ["entropy", "chks", "zang"])
def test_uniform_reward_closed_form(kind, eps):
    m = make_problem("uniform-f", nodes=51, K=3)
    fam = sm.build_family(kind, 3)
    s = solve_hjb(m, fam, eps)
    x = m.grid.coords[:, 0]
    bump = eps * float(sm.eval_H(fam, np.zeros(3)))
    np.testing.assert_allclose(s.u, (1 + bump) * x * (1 - x) / 2, atol=1e-12)
    assert s.final_residual <= 1e-10


@pytest.mark.derived
def test_eps_zero_ties_select_first_action():
    m = make_problem("uniform-f", nodes=21, K=3)
    s = solve_hjb(m, sm.build_family("entropy", 3), 0.0)
    np.testing.assert_array_equal(s.control, np.tile([1.0, 0.0, 0.0], (19, 1)))
    np.testing.assert_array_equal(s.exploration, 0.0)


@pytest.mark.derived
@pytest.mark.parametrize("eps", [0.0, 0.25, 1.0, 2.0])
def test_two_action_gap_exact_for_zang(eps):
    m = make_problem("two-action-gap", nodes=41)
    s = solve_hjb(m, sm.build_family("zang", 2), eps)
    x = m.grid.coords[:, 0]
    np.testing.assert_allclose(s.u, x * (1 - x) / 2, atol=1e-12)
    assert np.array_equal(s.control, np.tile([0.0, 1.0], (39, 1)))


@pytest.mark.derived
def test_two_action_gap_entropy_softmax_control():
    m = make_problem("two-action-gap", nodes=41)
    eps = 0.5
    s = solve_hjb(m, sm.build_family("entropy", 2), eps)
    np.testing.assert_allclose(s.control[:, 0], 1 / (1 + math.exp(1 / eps)), atol=1e-12)
    # constant reward plus entropy bonus eps*log(1 + e^{-1/eps}) gives a Poisson solution
    rate = eps * math.log1p(math.exp(-1 / eps)) + 1
    x = m.grid.coords[:, 0]
    np.testing.assert_allclose(s.u, rate * x * (1 - x) / 2, atol=1e-12)


@pytest.mark.derived
def test_policy_iterates_increase():
    m = make_problem("box-2d", nodes=15)
    seen = []
    solve_hjb(m, sm.build_family("chks", 2), 0.05, callback=lambda i, u: seen.append(u.copy()))
    assert len(seen) >= 2
    for prev, cur in zip(seen, seen[1:]):
        assert np.all(cur >= prev - 1e-12)


@pytest.mark.derived
def test_value_decreases_as_eps_decreases():
    m = make_problem("box-2d", nodes=13)
    fam = sm.build_family("entropy", 2)
    us = [solve_hjb(m, fam, e).u for e in (0.5, 0.1, 0.0)]
    assert np.all(us[0] >= us[1] - 1e-10) and np.all(us[1] >= us[2] - 1e-10)


@pytest.mark.trivial
def test_solver_error_carries_history():
    m = make_problem("box-2d", nodes=21)
    with pytest.raises(SolverError) as info:
        solve_hjb(m, sm.build_family("entropy", 2), 0.01, SolverOptions(max_iterations=1))
    assert len(info.value.history) == 2


@pytest.mark.trivial
def test_family_size_mismatch():
    with pytest.raises(ArgumentError):
        solve_hjb(make_problem("two-action-gap", nodes=11), sm.build_family("zang", 3), 0.1)


@pytest.mark.derived
def test_linear_dirichlet_harmonic_constant():
    m = make_problem("uniform-f", nodes=15, K=2)
    w = solve_linear_dirichlet(np.full((13, 2), 0.5), m, 0.0, 3.0)
    np.testing.assert_allclose(w, 3.0, atol=1e-13)


@pytest.mark.derived
def test_linear_dirichlet_boundary_forms():
    g = build_grid([(0, 1), (0, 1)], 6)
    m = ActionModel.from_fields(g, 1.0, a=np.eye(2) / 2)
    x, y = g.coords.T
    exact = x + 2 * y  # harmonic
    lam = np.ones((16, 1))
    full = solve_linear_dirichlet(lam, m, 0.0, exact)
    part = solve_linear_dirichlet(lam, m, 0.0, exact[g.boundary])
    np.testing.assert_allclose(full, exact, atol=1e-12)
    np.testing.assert_allclose(part, exact, atol=1e-12)
    with pytest.raises(ArgumentError):
        solve_linear_dirichlet(lam, m, 0.0, np.zeros(7))


@pytest.mark.derived
def test_feedback_control_matches_solver():
    m = make_problem("sign-switch-drift", nodes=41)
    fam = sm.build_family("entropy", 2)
    s = solve_hjb(m, fam, 0.2)
    np.testing.assert_allclose(feedback_control(s.u, m, fam, 0.2), s.control, atol=1e-9)


@pytest.mark.derived
def test_suboptimal_with_unchanged_model_reproduces_value():
    m = make_problem("sign-switch-drift", nodes=41)
    s = solve_hjb(m, sm.build_family("zang", 2), 0.2)
    np.testing.assert_allclose(solve_suboptimal(s, m), s.u, atol=1e-10)


@pytest.mark.derived
def test_two_dimensional_problem_converges():
    m = make_problem("box-2d", nodes=15)
    s = solve_hjb(m, sm.build_family("zang", 2), 0.1)
    assert s.final_residual <= 1e-10
    assert np.all(s.u[m.grid.interior] > 0)
