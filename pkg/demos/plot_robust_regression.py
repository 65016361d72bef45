"""
Robust nonlinear regression with inexact residuals
==================================================

Fit ``u + 0.5 sin(u)`` residuals under an l1 loss, where every residual and
Jacobian evaluation carries bounded noise.  The solver asks for just enough
accuracy at each iteration and reports how tight it had to get.
"""

import numpy as np

from arlda import AlgoConstants, brute_force_phi, make_oracle, make_problem, run

# %%
# Build the problem and an oracle that perturbs each answer by up to the
# requested accuracy.

spec = make_problem("nl-l1-regression", n=3, seed=0)
oracle = make_oracle("noise", spec, seed=1)
report, records = run(spec, AlgoConstants(epsilon=1e-4), oracle)

print(f"status       {report.status}")
print(f"iterations   {report.iterations}")
print(f"psi(x0)      {spec.psi(spec.x0):.6f}")
print(f"psi(x)       {spec.psi(report.x):.6f}")

# %%
# The criticality measure at the final iterate, computed from exact values
# by brute force, sits below the target.

print(f"phi(x)       {brute_force_phi(spec, report.x):.3e}")

# %%
# Accuracy requested per iteration: loose early, tight near the end.

for r in records[:: max(1, len(records) // 8)]:
    print(f"k={r.k:3d}  sigma={r.sigma:9.3e}  eps_c={r.eps_c:9.3e}  eps_J={r.eps_J:9.3e}  phibar={r.phibar:9.3e}")
