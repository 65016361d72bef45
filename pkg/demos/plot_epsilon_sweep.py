"""
Iteration counts against the target accuracy
============================================

Solve the same problem for decreasing targets and compare the number of
successful iterations with the worst-case budget.  The fitted log-log slope
is far below the worst-case exponent 2.
"""

import numpy as np

from arlda import AlgoConstants, make_oracle, make_problem, run
from arlda.core import sigma_max_bound, tau_bound

spec = make_problem("nl-l1-regression", n=10)
epsilons = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
successful = []

for eps in epsilons:
    consts = AlgoConstants(epsilon=eps)
    report, _ = run(spec, consts, make_oracle("adversarial", spec))
    tau = tau_bound(sigma_max_bound(spec, consts), spec.psi(spec.x0) - spec.psi_low, consts, eps)
    successful.append(report.ledger.successful)
    print(f"eps={eps:7.0e}  {report.status:6s}  iterations={report.iterations:3d}  tau={tau:9.3e}")

slope = np.polyfit(np.log(1.0 / np.array(epsilons)), np.log(successful), 1)[0]
print(f"slope of log(successful) vs log(1/eps): {slope:.3f}")
