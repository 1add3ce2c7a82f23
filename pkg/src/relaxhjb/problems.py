"""Built-in benchmark problems.

uniform-f
    1D on [0, 1], K identical actions with ``a = 1, b = c = 0, f = 1, g = 0``.
    The regularized solution is ``(1 + eps * H(0)) x (1 - x) / 2``.
two-action-gap
    1D on [0, 1], two actions with ``a = 1``, ``f = (0, 1)``. The second
    action leads by exactly 1 everywhere.
sign-switch-drift
    1D on [0, 1], ``a = 1/2``, ``f1 - f2 = x - 1/2``, so the optimal action
    switches at ``x = 1/2``. Both actions share the drift ``drift``
    (default 0).
box-2d
    [0, 1]^2 with diagonal diffusions ``diag(1, 1/2)`` and ``diag(1/2, 1)``
    and rewards favouring action 1 for large ``x1`` and action 2 for large ``x2``.
"""

from __future__ import annotations

import numpy as np

from .discretize import build_grid
from .errors import ArgumentError
from .model import ActionModel

BUILTIN = ("uniform-f", "two-action-gap", "sign-switch-drift", "box-2d")


def uniform_f(nodes=101, K=3):
    grid = build_grid((0.0, 1.0), nodes)
    return ActionModel.from_fields(grid, 2.0, a=1.0, f=1.0, K=K, name="uniform-f")


def two_action_gap(nodes=101):
    grid = build_grid((0.0, 1.0), nodes)
    return ActionModel.from_fields(grid, 2.0, a=1.0, f=[0.0, 1.0], name="two-action-gap")


def sign_switch_drift(nodes=101, drift=0.0):
    grid = build_grid((0.0, 1.0), nodes)
    return ActionModel.from_fields(grid, 1.0, a=0.5, b=drift, f=[lambda x: x[:, 0], 0.5],
                                   K=2, name="sign-switch-drift")


def box_2d(nodes=21):
    grid = build_grid([(0.0, 1.0), (0.0, 1.0)], nodes)
    a = [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])]
    f = [lambda x: 1.0 + 0.5 * x[:, 0], lambda x: 1.0 + 0.5 * x[:, 1]]
    return ActionModel.from_fields(grid, 1.0, a=a, f=f, name="box-2d")


def make_problem(name: str, nodes=None, K=None, **kwargs) -> ActionModel:
    """Instantiate a built-in problem on a grid with ``nodes`` nodes per axis."""
    if name not in BUILTIN:
        raise ArgumentError(f"unknown problem {name!r}; choose from {', '.join(BUILTIN)}")
    if nodes is not None:
        kwargs["nodes"] = nodes
    if name == "uniform-f":
        if K is not None:
            kwargs["K"] = K
        return uniform_f(**kwargs)
    if K is not None and K != 2:
        raise ArgumentError(f"problem {name!r} has exactly 2 actions")
    return {"two-action-gap": two_action_gap, "sign-switch-drift": sign_switch_drift,
            "box-2d": box_2d}[name](**kwargs)
