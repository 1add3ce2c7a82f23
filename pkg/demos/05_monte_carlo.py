"""Simulate the relaxed dynamics under the computed control and compare with the PDE.

Run: python demos/05_monte_carlo.py   (about 10 seconds)
"""

import math

from relaxhjb import build_family, make_problem, simulate_value, solve_hjb

model = make_problem("uniform-f", nodes=201, K=3)
s = solve_hjb(model, build_family("entropy", 3), 0.1)
exact = (1 + 0.1 * math.log(3)) / 8

for bridge in (False, True):
    est = simulate_value(model, s, [0.5], 10_000, 1e-4, seed=7, bridge=bridge)
    z = (est.mean - exact) / est.stderr
    label = "bridge exit check" if bridge else "step-resolution exit"
    print(f"{label:22s} mean={est.mean:.5f} +- {est.stderr:.5f}  z={z:+.2f}  mean steps={est.mean_steps:.0f}")
print(f"PDE value                   {exact:.5f}")
