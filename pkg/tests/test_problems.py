import numpy as np
import pytest

from arlda import PROBLEMS, ConfigurationError, OuterFunction, make_problem
from arlda.verify import finite_diff_check, lipschitz_probe


@pytest.fixture(params=PROBLEMS)
def spec(request):
    return make_problem(request.param, n=3, seed=2)


class TestCatalogue:
    def test_unknown_problem(self):
        with pytest.raises(ConfigurationError, match="unknown problem"):
            make_problem("himmelblau")

    def test_shapes(self, spec):
        x = spec.x0
        assert np.shape(spec.g_exact(x)) == (spec.n,)
        assert np.shape(spec.c_exact(x)) == (spec.m,)
        assert np.shape(spec.J_exact(x)) == (spec.m, spec.n)
        assert np.isfinite(spec.psi(x))

    def test_derivatives_match_finite_differences(self, spec):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = spec.x0 + rng.uniform(-1, 1, spec.n)
            rep = finite_diff_check(spec, x)
            assert rep.g_error <= 1e-6
            assert rep.J_error <= 1e-6

    def test_lipschitz_constants_are_upper_bounds(self, spec):
        # constants follow the half-constant convention, so the observed ratio is compared with 2L
        if spec.L_g is not None:
            assert lipschitz_probe(spec.g_exact, spec.x0, radius=2.0) <= 2.0 * spec.L_g + 1e-9
        if spec.L_J is not None:
            fro = lambda x: np.asarray(spec.J_exact(x)).ravel()
            assert lipschitz_probe(fro, spec.x0, radius=2.0) <= 2.0 * spec.L_J + 1e-9

    def test_lower_bound(self, spec):
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert spec.psi(spec.x0 + rng.uniform(-5, 5, spec.n)) >= spec.psi_low - 1e-12

    def test_outer_function_override(self):
        spec = make_problem("lassoNd", h=OuterFunction("l2", 2.0))
        assert spec.h.kind == "l2" and spec.L_h == 2.0

    def test_seed_changes_data(self):
        a = make_problem("nl-l1-regression", n=3, seed=0)
        b = make_problem("nl-l1-regression", n=3, seed=1)
        assert not np.allclose(a.c_exact(np.ones(3)), b.c_exact(np.ones(3)))

    def test_series_decomposition_tails(self):
        spec = make_problem("series-l1")
        x = np.array([0.9])
        for q in ("f", "g"):
            dec = spec.decompositions[q]
            exact = spec.f_exact(x) if q == "f" else spec.g_exact(x)
            for N in (1, 5, 20):
                partial = sum(np.asarray(dec.term(i, x)) for i in range(1, N + 1))
                assert np.linalg.norm(np.atleast_1d(exact - partial)) <= dec.tail_bound(N) + 1e-15

    def test_finite_sum_decomposition(self):
        spec = make_problem("finite-sum")
        x = np.array([0.2, -0.4])
        for q in ("f", "g"):
            dec = spec.decompositions[q]
            terms = [np.asarray(dec.term(i, x)) for i in range(dec.count)]
            exact = spec.f_exact(x) if q == "f" else spec.g_exact(x)
            np.testing.assert_allclose(sum(terms) / dec.count, exact, atol=1e-14)
            assert max(np.linalg.norm(np.atleast_1d(t)) for t in terms) <= dec.bound
