"""How far each smooth max sits above the true max, and where it stops smoothing.

Run: python demos/01_generators.py
"""

import numpy as np

from relaxhjb import smoothmax as sm

print("generator  K  c0        theta")
for kind in ("entropy", "chks", "zang"):
    for K in (2, 3, 5):
        fam = sm.build_family(kind, K)
        theta = "-" if fam.theta_sloc is None else f"{fam.theta_sloc:.4f}"
        print(f"{kind:9s} {K:2d}  {fam.c0:.5f}  {theta}")

# Scaling by eps shrinks the excess linearly.
x = np.array([0.3, 0.0, -0.2])
print("\nexcess H_eps(x) - max(x) at x =", x)
for eps in (1.0, 0.1, 0.01):
    row = [float(sm.eval_H_eps(sm.build_family(k, 3), eps, x) - x.max()) for k in ("entropy", "chks", "zang")]
    print(f"  eps={eps:<5} entropy={row[0]:.2e} chks={row[1]:.2e} zang={row[2]:.2e}")

# Once the leader is ahead by eps * theta, the quartic generator is the exact max
# and its gradient (the relaxed control) is a unit vector.
zang = sm.build_family("zang", 3)
lead = np.array([0.0 + 0.1 * zang.theta_sloc, 0.0, -1.0])
print("\nzang at eps=0.1 with a lead of eps*theta:",
      "H - max =", float(sm.eval_H_eps(zang, 0.1, lead) - lead.max()),
      "control =", sm.grad_H_eps(zang, 0.1, lead))
ent = sm.build_family("entropy", 3)
print("entropy control at the same point:", np.round(sm.grad_H_eps(ent, 0.1, lead), 4))
