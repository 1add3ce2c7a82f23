"""Quartic smoothing recovers the unregularized control exactly; entropy never does.

two-action-gap: action 2 earns 1 more than action 1 everywhere.

Run: python demos/03_exact_regularization.py
"""

import math

from relaxhjb import build_family, control_convergence, make_problem, solve_hjb

model = make_problem("two-action-gap", nodes=101)
eps_list = [2.0, 1.0, 0.5, 0.25, 0.1]

for kind in ("zang", "entropy"):
    print(f"\n{kind}: distance of the regularized control to e2")
    for r in control_convergence(model, build_family(kind, 2), eps_list, gap_threshold=0.5):
        softmax = 2 / (1 + math.exp(1 / r.eps))
        print(f"  eps={r.eps:<5} distance={r.sup_distance:.3e} exact={r.exact} "
              f"(softmax closed form {softmax:.3e})")

# On a switching problem the exact region is a band away from x = 1/2 that
# widens as eps shrinks.
model = make_problem("sign-switch-drift", nodes=201)
zang = build_family("zang", 2)
print("\nsign-switch-drift, zang, nodes where the control is a unit vector:")
for eps in (0.4, 0.2, 0.1, 0.05):
    s = solve_hjb(model, zang, eps)
    pure = (s.control.max(axis=1) == 1.0).mean()
    print(f"  eps={eps:<5} fraction={pure:.3f}")
