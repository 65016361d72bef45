"""
What happens when the oracle cannot get more accurate
=====================================================

With an accuracy floor on the gradient the small-criticality test can no
longer be certified.  The run stops with a stall status, names the test that
ran out of accuracy and reports the best optimality bound the noise allows.
"""

from arlda import AccuracyFloor, AlgoConstants, make_oracle, make_problem, run

spec = make_problem("lassoNd")

for floor in (AccuracyFloor(g=1e-3), AccuracyFloor(f=1e-3), AccuracyFloor(c=1e-6)):
    oracle = make_oracle("noise", spec, seed=5, floor=floor)
    report, _ = run(spec, AlgoConstants(epsilon=1e-6, sigma0=100.0), oracle)
    print(f"{floor}")
    print(f"    {report.status} / {report.stall_case}, noisy bound {report.noisy_bound:.3e}")
    for w in report.warnings:
        print(f"    warning: {w}")
