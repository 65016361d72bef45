import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arlda import make_problem
from arlda.oracles import (
    AccuracyFloor,
    AccuracyFloorReached,
    AdditiveNoiseOracle,
    EvaluationLedger,
    ExactOracle,
    OracleRequest,
    PartialSumOracle,
    SumDecomposition,
    TruncatedSeriesOracle,
    evaluate,
    ledger_snapshot,
    make_oracle,
)

QUANTITIES = ("f", "g", "c", "J")


def error(oracle, x, q, value):
    exact = oracle.exact(q, x)
    if q == "f":
        return abs(value - exact)
    return float(np.linalg.norm(np.asarray(value) - exact))


ORACLE_CASES = [
    ("exact", "lassoNd"),
    ("noise", "nl-l1-regression"),
    ("adversarial", "rosenbrock-pen"),
    ("series", "series-l1"),
    ("partial", "finite-sum"),
]


class TestRequest:
    def test_rejects_unknown_quantity_and_negative_accuracy(self):
        with pytest.raises(ValueError):
            OracleRequest(np.zeros(1), "h", 0.1)
        with pytest.raises(ValueError):
            OracleRequest(np.zeros(1), "f", -1.0)
        with pytest.raises(ValueError):
            OracleRequest(np.zeros(1), "f", math.nan)

    def test_zero_accuracy_needs_exact_capability(self):
        oracle = TruncatedSeriesOracle(make_problem("series-l1"))
        with pytest.raises(ValueError):
            oracle(np.zeros(1), "f", 0.0)


class TestContract:
    @pytest.mark.parametrize("kind,problem", ORACLE_CASES)
    def test_measured_le_certified_le_requested(self, kind, problem):
        spec = make_problem(problem, n=3)
        oracle = make_oracle(kind, spec, seed=3)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.uniform(-2, 2, spec.n)
            for eps in (0.5, 1e-2, 1e-4, 1e-6):
                for q in QUANTITIES:
                    resp = oracle(x, q, eps)
                    assert error(oracle, x, q, resp.value) <= resp.certified_error + 1e-12
                    assert resp.certified_error <= eps
                    assert resp.cost_units >= 0

    def test_exact_oracle_certifies_zero(self):
        spec = make_problem("quad")
        oracle = ExactOracle(spec)
        resp = oracle(np.array([1.0, 2.0]), "g", 0.1)
        assert resp.certified_error == 0.0
        np.testing.assert_array_equal(resp.value, [1.0, 2.0])

    def test_noise_with_zero_accuracy_is_exact(self):
        spec = make_problem("lassoNd")
        oracle = AdditiveNoiseOracle(spec, seed=1)
        x = np.array([0.3, -0.2, 1.0])
        resp = evaluate(oracle, OracleRequest(x, "g", 0.0))
        assert resp.certified_error == 0.0
        np.testing.assert_array_equal(resp.value, spec.g_exact(x))

    def test_adversarial_error_size(self):
        spec = make_problem("nl-l1-regression", n=3)
        oracle = make_oracle("adversarial", spec)
        x = np.ones(3)
        for q in QUANTITIES[1:]:
            assert error(oracle, x, q, oracle(x, q, 0.01).value) == pytest.approx(0.00999, rel=1e-9)

    @given(seed=st.integers(0, 2 ** 31), eps=st.floats(1e-8, 1.0))
    @settings(max_examples=30)
    def test_noise_is_reproducible(self, seed, eps):
        spec = make_problem("lassoNd")
        x = np.array([0.1, 0.2, 0.3])
        a, b = AdditiveNoiseOracle(spec, seed), AdditiveNoiseOracle(spec, seed)
        for q in QUANTITIES:
            np.testing.assert_array_equal(a(x, q, eps).value, b(x, q, eps).value)

    def test_noise_mode_is_validated(self):
        with pytest.raises(ValueError):
            AdditiveNoiseOracle(make_problem("quad"), mode="gaussian")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_oracle("oracle", make_problem("quad"))

    def test_missing_decomposition(self):
        with pytest.raises(ValueError):
            make_oracle("series", make_problem("quad"))
        with pytest.raises(ValueError):
            make_oracle("partial", make_problem("quad"))


class TestSeries:
    def test_ten_terms_for_1e_3(self):
        spec = make_problem("series-l1")
        oracle = TruncatedSeriesOracle(spec)
        x = np.array([0.7])
        resp = oracle(x, "f", 1e-3)
        assert resp.cost_units == 10
        assert resp.certified_error == pytest.approx(2.0 ** -10)
        assert resp.value == pytest.approx(sum(2.0 ** -i * math.sin(i * 0.7) for i in range(1, 11)), abs=1e-15)
        # 60-term reference and the closed form agree to machine precision
        reference = math.fsum(2.0 ** -i * math.sin(i * 0.7) for i in range(1, 61))
        assert spec.f_exact(x) == pytest.approx(reference, abs=1e-15)
        assert abs(resp.value - reference) <= 2.0 ** -10

    def test_g_series_matches_closed_form(self):
        spec = make_problem("series-l1")
        oracle = TruncatedSeriesOracle(spec)
        x = np.array([-1.3])
        resp = oracle(x, "g", 1e-9)
        np.testing.assert_allclose(resp.value, spec.g_exact(x), atol=1e-9)

    def test_max_terms_acts_as_floor(self):
        oracle = TruncatedSeriesOracle(make_problem("series-l1"), max_terms=5)
        with pytest.raises(AccuracyFloorReached):
            oracle(np.zeros(1), "f", 1e-3)

    def test_c_and_J_are_exact(self):
        oracle = TruncatedSeriesOracle(make_problem("series-l1"))
        resp = oracle(np.array([0.4]), "c", 1e-3)
        assert resp.certified_error == 0.0


class TestPartialSum:
    def test_seventy_five_summands_for_half(self):
        spec = make_problem("finite-sum")
        oracle = PartialSumOracle(spec)
        x = np.array([0.5, -0.5])
        resp = oracle(x, "f", 0.5)
        assert resp.cost_units == 75
        assert resp.certified_error == pytest.approx(0.5)
        assert abs(resp.value - spec.f_exact(x)) <= 0.5

    def test_summand_count_is_minimal(self):
        spec = make_problem("finite-sum")
        oracle = PartialSumOracle(spec)
        dec = oracle.sums["f"]
        for eps in (1e-3, 0.02, 0.1, 0.37, 1.0, 3.0):
            k = oracle.summands_needed("f", eps)
            assert oracle.tail_bound(dec, k) <= eps
            if k > 1:
                assert oracle.tail_bound(dec, k - 1) > eps

    def test_zero_bound_needs_one_summand(self):
        spec = make_problem("finite-sum")
        spec.decompositions["f"] = SumDecomposition(lambda i, x: 0.0, 10, 0.0)
        assert PartialSumOracle(spec).summands_needed("f", 1e-6) == 1


class TestCost:
    @pytest.mark.parametrize("kind,problem", [("series", "series-l1"), ("partial", "finite-sum")])
    @pytest.mark.parametrize("q", ["f", "g"])
    def test_tighter_accuracy_never_costs_less(self, kind, problem, q):
        spec = make_problem(problem)
        oracle = make_oracle(kind, spec)
        x = spec.x0
        costs = [oracle(x, q, eps).cost_units for eps in np.logspace(0, -8, 17)]
        assert all(b >= a for a, b in zip(costs, costs[1:]))


class TestFloor:
    def test_below_floor_raises(self):
        oracle = ExactOracle(make_problem("quad"), floor=AccuracyFloor(g=1e-3))
        oracle(np.zeros(2), "g", 1e-3)
        with pytest.raises(AccuracyFloorReached) as info:
            oracle(np.zeros(2), "g", 1e-4)
        assert info.value.quantity == "g" and info.value.floor == 1e-3

    def test_floor_breach_is_not_recorded(self):
        oracle = ExactOracle(make_problem("quad"), floor=AccuracyFloor(f=1.0))
        with pytest.raises(AccuracyFloorReached):
            oracle(np.zeros(2), "f", 0.5)
        assert oracle.ledger.counts["f"] == 0


class TestLedger:
    def test_fresh_ledger(self):
        summary = ledger_snapshot(EvaluationLedger())
        assert summary.counts == dict.fromkeys(QUANTITIES, 0)
        assert summary.shrink_events == summary.successful == summary.unsuccessful == 0

    def test_records_counts_and_min_eps(self):
        oracle = make_oracle("partial", make_problem("finite-sum"))
        oracle.ledger.begin_iteration()
        oracle(np.zeros(2), "f", 0.5)
        oracle(np.zeros(2), "f", 0.1)
        oracle.ledger.record_shrink()
        oracle.ledger.record_outcome(True)
        oracle.ledger.record_outcome(False)
        s = oracle.ledger.snapshot()
        assert s.counts["f"] == 2 and s.iteration_counts[-1]["f"] == 2
        assert s.min_eps["f"] == 0.1
        assert s.cost_units["f"] == 75 + 95
        assert (s.shrink_events, s.successful, s.unsuccessful) == (1, 1, 1)
        assert s.as_dict()["counts"]["f"] == 2

    def test_snapshot_is_a_copy(self):
        ledger = EvaluationLedger()
        s = ledger.snapshot()
        ledger.record_shrink()
        assert s.shrink_events == 0
