import math
from dataclasses import replace

import numpy as np
import pytest

from arlda import AlgoConstants, ConfigurationError, OuterFunction, ProblemSpec, make_problem
from arlda.core import AccuracyState, DecreaseReport, Evaluation
from arlda.oracles import AccuracyFloor, ExactOracle, make_oracle
from arlda.solver import (
    ACCURACY_STALLED,
    EXIT1,
    EXIT2,
    FUNCTION_NOISE,
    MAX_ITERATIONS,
    PHI_NOISE,
    STEP_NOISE,
    SHRINK_SLACK,
    Proceed,
    Terminate,
    feasibility_warnings,
    initialize,
    run,
    step1_check_termination,
    step2_compute_step,
    step3_accept,
    step4_update_sigma,
    step5_update_accuracy,
)
from arlda.subproblem import CriticalitySolution, ModelSolution, SubproblemCertificate
from arlda.verify import audit_run, brute_force_phi


def linear_spec(g, f0=0.0, h="zero"):
    """f(x) = f0 + g.x with c = 0 and J = 0."""
    g = np.asarray(g, dtype=float)
    n = g.size
    return ProblemSpec(
        n=n, m=1, f_exact=lambda x: f0 + float(g @ x), g_exact=lambda x: g.copy(),
        c_exact=lambda x: np.zeros(1), J_exact=lambda x: np.zeros((1, n)),
        h=OuterFunction(h), x0=np.zeros(n), L_g=0.0, L_J=0.0,
    )


def fixed_criticality(value, upper=None):
    upper = value if upper is None else upper

    def solver(snapshot, h, **kwargs):
        cert = SubproblemCertificate(value, upper, upper - value, 1)
        return CriticalitySolution(np.zeros(snapshot.g.size), value, cert, np.zeros(snapshot.c.size))

    return solver


def fixed_model(norm, dl):
    def solver(snapshot, h, sigma, target, **kwargs):
        step = np.zeros(snapshot.g.size)
        step[0] = norm
        rep = DecreaseReport(step, dl, dl - 0.5 * sigma * norm ** 2, norm)
        return ModelSolution(step, rep, SubproblemCertificate(rep.model_decrease, rep.model_decrease, 0.0, 1),
                             np.zeros(snapshot.c.size))

    return solver


def fill_exact(state, oracle):
    for q in "gcJ":
        state.snapshot.store(q, Evaluation(oracle.exact(q, state.x), 0.0, 0.0))


def crafted_state(epsilon, eps, omega):
    spec = make_problem("lasso1d")
    oracle = ExactOracle(spec)
    state = initialize(spec, AlgoConstants(), oracle)
    state.consts = replace(state.consts, epsilon=epsilon)
    state.eps = eps
    state.omega = omega
    return state, oracle


class TestInitialize:
    def test_without_outer_function(self):
        state = initialize(make_problem("quad"), AlgoConstants())
        assert state.eps.f == pytest.approx(1.0 / 60.0)
        assert state.omega == pytest.approx(1.0 / 60.0)

    def test_default_split(self):
        state = initialize(make_problem("lasso1d"), AlgoConstants())
        assert state.omega == pytest.approx(1.0 / 60.0)
        assert state.eps.f == pytest.approx(1.0 / 120.0)
        assert state.eps.c == pytest.approx(1.0 / 120.0)
        assert state.eps.f + state.spec.L_h * state.eps.c <= state.omega + 1e-15
        assert (state.eps.g, state.eps.J) == (0.1, 0.1)

    def test_large_sigma0_binds(self):
        state = initialize(make_problem("lasso1d"), AlgoConstants(sigma0=200.0))
        assert state.omega == pytest.approx(0.005)

    def test_rejects_invalid_constants(self):
        with pytest.raises(ConfigurationError):
            initialize(make_problem("quad"), AlgoConstants(eta1=0.95))


class TestStep1:
    def test_exit1(self):
        state, oracle = crafted_state(0.6, AccuracyState(1e-3, 0.002, 0.0, 0.002), 0.01)
        out = step1_check_termination(state, oracle, fixed_criticality(0.5))
        assert isinstance(out, Terminate) and out.status == EXIT1
        assert state.shrinks == 0

    def test_proceed_above_threshold(self):
        state, oracle = crafted_state(0.1, AccuracyState(1e-3, 0.002, 0.0, 0.002), 0.01)
        out = step1_check_termination(state, oracle, fixed_criticality(0.5))
        assert isinstance(out, Proceed) and out.phi_bar == 0.5

    def test_exit2(self):
        state, oracle = crafted_state(1.0, AccuracyState(1e-3, 0.2, 0.0, 0.2), 1.0 / 60.0)
        out = step1_check_termination(state, oracle, fixed_criticality(0.3))
        assert isinstance(out, Terminate) and out.status == EXIT2
        assert state.shrinks == 0

    def test_shrink_then_exit2(self):
        state, oracle = crafted_state(1.0, AccuracyState(1e-3, 0.3, 0.0, 0.3), 1.0 / 60.0)
        out = step1_check_termination(state, oracle, fixed_criticality(0.3))
        assert out.status == EXIT2
        assert state.shrinks == 1
        assert state.eps.g == pytest.approx(0.03) and state.eps.J == pytest.approx(0.03)

    def test_small_measure_uses_upper_bound(self):
        # 0.5 <= 0.594 but the certified upper bound 0.7 is not, so no Exit1
        state, oracle = crafted_state(0.6, AccuracyState(1e-3, 0.002, 0.0, 0.002), 0.01)
        out = step1_check_termination(state, oracle, fixed_criticality(0.5, 0.7))
        assert isinstance(out, Proceed)


class TestStep2:
    def test_smooth_step(self):
        spec = linear_spec([3.0, 4.0])
        oracle = ExactOracle(spec)
        state = initialize(spec, AlgoConstants(), oracle)
        state.eps = AccuracyState(0.0, 0.0, 0.0, 0.0)
        out = step1_check_termination(state, oracle)
        assert out.phi_bar == pytest.approx(5.0)
        sol = step2_compute_step(state, oracle, out.phi_bar)
        np.testing.assert_allclose(sol.step, [-3.0, -4.0])
        assert sol.report.linearized_decrease == pytest.approx(25.0)
        assert sol.report.linearized_decrease >= 0.25 * min(1.0, 5.0) * 5.0

    def test_noisy_step_shrinks(self):
        state, oracle = crafted_state(1e-3, AccuracyState(1e-3, 0.1, 0.1, 0.1), 0.0167)
        fill_exact(state, oracle)
        assert step2_compute_step(state, oracle, 1.0, fixed_model(1.0, 1.0)) is None
        assert state.shrinks == 1 and state.shrink_source == "step2"
        assert state.eps.g == pytest.approx(0.01)


class TestStep3:
    def run_step3(self, slope, omega=1.0 / 60.0, eps_f=0.0, dl=1.0):
        spec = linear_spec([-slope], f0=10.0)
        oracle = ExactOracle(spec)
        state = initialize(spec, AlgoConstants(), oracle)
        state.omega = omega
        state.eps.f = eps_f
        fill_exact(state, oracle)
        rep = DecreaseReport(np.ones(1), dl, dl - 0.5, 1.0)
        return state, step3_accept(state, oracle, np.ones(1), rep)

    def test_accept(self):
        state, (rho, accepted, psi, psi_plus) = self.run_step3(1.0)
        assert (psi, psi_plus) == (10.0, 9.0)
        assert rho == pytest.approx(1.0) and accepted
        np.testing.assert_array_equal(state.x, [1.0])

    def test_reject(self):
        state, (rho, accepted, _, _) = self.run_step3(0.05)
        assert rho == pytest.approx(0.05) and not accepted
        np.testing.assert_array_equal(state.x, [0.0])

    def test_eps_f_shrinks_once(self):
        state, _ = self.run_step3(0.01, omega=0.0167, eps_f=1e-3, dl=0.01)
        assert state.eps.f == pytest.approx(1e-4)

    def test_at_most_two_f_evaluations(self):
        state, _ = self.run_step3(1.0, eps_f=1e-3)
        assert state.ledger.current["f"] == 2


class TestStep4:
    @pytest.mark.parametrize("rho,expected", [(0.95, 0.5), (0.5, 1.0), (0.05, 2.0), (0.9, 0.5), (0.1, 1.0)])
    def test_update(self, rho, expected):
        state = initialize(make_problem("quad"), AlgoConstants())
        assert step4_update_sigma(state, rho) == expected

    def test_sigma_min(self):
        state = initialize(make_problem("quad"), AlgoConstants(sigma0=1e-8))
        assert step4_update_sigma(state, 1.0) == 1e-8


class TestStep5:
    def test_omega(self):
        state = initialize(make_problem("lasso1d"), AlgoConstants())
        state.sigma = 0.5
        assert step5_update_accuracy(state) == pytest.approx(1.0 / 60.0)
        state.sigma = 200.0
        assert step5_update_accuracy(state) == pytest.approx(0.005)
        assert state.eps.f + state.spec.L_h * state.eps.c <= 0.005 + 1e-15

    def test_standard_mode_rescales(self):
        state = initialize(make_problem("lasso1d"), AlgoConstants())
        state.eps.g = 0.01
        state.sigma = 120.0
        step5_update_accuracy(state)
        assert state.eps.g == pytest.approx(0.005)
        state.sigma = 60.0
        step5_update_accuracy(state)
        assert state.eps.g == pytest.approx(0.01)

    def test_monotonic_mode_never_increases(self):
        state = initialize(make_problem("lasso1d"), AlgoConstants(monotonic=True))
        state.eps.g = 0.01
        state.sigma = 120.0
        step5_update_accuracy(state)
        state.sigma = 1.0
        step5_update_accuracy(state)
        assert state.eps.g == 0.01
        assert state.omega == pytest.approx(1.0 / 60.0)


class TestRun:
    def test_smooth_quadratic(self):
        spec = make_problem("quad")
        report, records = run(spec, AlgoConstants(epsilon=1e-6), ExactOracle(spec))
        # exact values are cached, so the run may end through either exit
        assert report.status in (EXIT1, EXIT2)
        assert np.linalg.norm(spec.g_exact(report.x)) <= 1e-6
        assert records[-1].outcome == report.status

    def test_l1_of_identity(self):
        spec = ProblemSpec(
            n=1, m=1, f_exact=lambda x: 0.0, g_exact=lambda x: np.zeros(1),
            c_exact=lambda x: x.copy(), J_exact=lambda x: np.eye(1),
            h=OuterFunction("l1"), x0=np.array([5.0]), L_g=0.0, L_J=0.0, psi_low=0.0,
        )
        report, _ = run(spec, AlgoConstants(epsilon=1e-4), ExactOracle(spec))
        assert report.converged
        assert brute_force_phi(spec, report.x) <= 1e-4
        assert abs(report.x[0]) <= 1e-3

    def test_floors_force_a_stall(self):
        spec = make_problem("lasso1d")
        oracle = make_oracle("noise", spec, seed=1, floor=AccuracyFloor(1e-2, 1e-2, 1e-2, 1e-2))
        report, _ = run(spec, AlgoConstants(epsilon=1e-6), oracle)
        assert report.status == ACCURACY_STALLED
        assert report.noisy_bound is not None and report.noisy_bound >= 0.5e-6
        assert report.warnings

    def test_max_iterations(self):
        spec = make_problem("rosenbrock-pen")
        report, records = run(spec, AlgoConstants(epsilon=1e-6, max_iterations=3), ExactOracle(spec))
        assert report.status == MAX_ITERATIONS
        assert len(records) == 3

    def test_callback_sees_every_record(self):
        spec = make_problem("lassoNd")
        seen = []
        _, records = run(spec, AlgoConstants(epsilon=1e-3), ExactOracle(spec), callback=seen.append)
        assert seen == records

    def test_evaluation_counts(self):
        spec = make_problem("lassoNd")
        oracle = make_oracle("noise", spec, seed=2)
        report, records = run(spec, AlgoConstants(epsilon=1e-4), oracle)
        assert report.converged
        for r in records:
            assert r.nf <= 2
            assert r.ng <= 1 + r.shrinks
        assert report.ledger.counts["g"] <= len(records) * (1 + max(r.shrinks for r in records))

    def test_deterministic(self):
        spec = make_problem("nl-l1-regression", n=4)
        a = run(spec, AlgoConstants(epsilon=1e-3), make_oracle("noise", spec, seed=7))[1]
        b = run(spec, AlgoConstants(epsilon=1e-3), make_oracle("noise", spec, seed=7))[1]
        assert [r.csv_row() for r in a] == [r.csv_row() for r in b]

    def test_audit_is_clean(self):
        spec = make_problem("lassoNd")
        consts = AlgoConstants(epsilon=1e-4)
        report, records = run(spec, consts, make_oracle("adversarial", spec))
        assert report.converged
        assert all(f.passed for f in audit_run(spec, consts, records))
        assert all(v["pass"] for v in report.audits.values())

    def test_monotonic_mode(self):
        spec = make_problem("lassoNd")
        consts = AlgoConstants(epsilon=1e-4, monotonic=True)
        report, records = run(spec, consts, make_oracle("noise", spec, seed=3))
        assert report.converged
        for q in "fgcJ":
            seq = [r.eps_top[q] for r in records]
            assert all(b <= a for a, b in zip(seq, seq[1:]))
        assert all(f.passed for f in audit_run(spec, consts, records))


class TestStalls:
    def stall(self, problem, floor, sigma0=1.0, kind="noise"):
        spec = make_problem(problem)
        oracle = make_oracle(kind, spec, seed=1, floor=floor)
        report, records = run(spec, AlgoConstants(epsilon=1e-6, sigma0=sigma0), oracle)
        assert report.status == ACCURACY_STALLED
        assert report.noisy_bound is not None and math.isfinite(report.noisy_bound)
        for r in records:
            assert r.shrinks <= math.ceil(r.nu_k) + SHRINK_SLACK
        return report

    def test_phi_noise(self):
        assert self.stall("lassoNd", AccuracyFloor(g=1e-3)).stall_case == PHI_NOISE

    def test_step_noise(self):
        assert self.stall("lasso1d", AccuracyFloor(c=1e-6), sigma0=100.0).stall_case == STEP_NOISE

    def test_function_noise(self):
        assert self.stall("lassoNd", AccuracyFloor(f=1e-3)).stall_case == FUNCTION_NOISE

    def test_feasibility_warnings(self):
        spec = make_problem("lassoNd")
        assert feasibility_warnings(spec, AlgoConstants(epsilon=1e-6), None) == []
        assert feasibility_warnings(spec, AlgoConstants(epsilon=1e-6), AccuracyFloor()) == []
        assert len(feasibility_warnings(spec, AlgoConstants(epsilon=1e-6), AccuracyFloor(1e-2, 1e-2, 1e-2, 1e-2))) == 3


class TestNegativeControl:
    def test_broken_accuracy_update_is_caught(self, monkeypatch):
        import arlda.solver as solver

        def inflate(state):
            # keeps omega but lets eps_f drift above it
            state.eps.f = 2.0 * state.omega
            return state.omega

        monkeypatch.setattr(solver, "step5_update_accuracy", inflate)
        spec = make_problem("lassoNd")
        consts = AlgoConstants(epsilon=1e-4)
        _, records = run(spec, consts, make_oracle("noise", spec, seed=3))
        failed = {f.check for f in audit_run(spec, consts, records) if not f.passed}
        assert "psi_accuracy_invariant" in failed
