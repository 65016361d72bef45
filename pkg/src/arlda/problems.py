"""Catalogue of test problems with closed-form derivatives.

Every problem carries Lipschitz data in the convention
``||g(x) - g(y)|| <= 2 L_g ||x - y||`` (likewise for J, with the Frobenius
norm bounding the operator norm), a lower bound ``psi_low`` where one is
known, and, for ``series-l1`` and ``finite-sum``, the decompositions used by
the truncated-series and partial-sum oracles.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ConfigurationError, OuterFunction, ProblemSpec
from .oracles import SeriesDecomposition, SumDecomposition

__all__ = ["PROBLEMS", "make_problem"]

PROBLEMS = ("quad", "lasso1d", "lassoNd", "nl-l1-regression", "rosenbrock-pen", "series-l1", "finite-sum")


def _quad(n, seed):
    n = 2 if n is None else n
    return ProblemSpec(
        n=n, m=n,
        f_exact=lambda x: 0.5 * float(x @ x),
        g_exact=lambda x: x.copy(),
        c_exact=lambda x: x.copy(),
        J_exact=lambda x: np.eye(n),
        h=OuterFunction("zero"), x0=np.ones(n), L_g=0.5, L_J=0.0, psi_low=0.0, name="quad",
    )


def _lasso1d(n, seed):
    # 1 - 1.2 cos(2x) lies in [-0.2, 2.2], so g is 2.2-Lipschitz
    return ProblemSpec(
        n=1, m=1,
        f_exact=lambda x: 0.5 * float(x[0] - 2.0) ** 2 + 0.3 * math.cos(2.0 * x[0]),
        g_exact=lambda x: np.array([x[0] - 2.0 - 0.6 * math.sin(2.0 * x[0])]),
        c_exact=lambda x: x.copy(),
        J_exact=lambda x: np.eye(1),
        h=OuterFunction("l1"), x0=np.array([4.0]), L_g=1.1, L_J=0.0, psi_low=-0.3, name="lasso1d",
    )


def _lassoNd(n, seed):
    n = 3 if n is None else n
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) / math.sqrt(n)
    b = rng.standard_normal(n)
    AtA = A.T @ A
    lip = float(np.linalg.norm(AtA, 2)) + 1.2
    return ProblemSpec(
        n=n, m=n,
        f_exact=lambda x: 0.5 * float(np.sum((A @ x - b) ** 2)) + 0.3 * float(np.sum(np.cos(2.0 * x))),
        g_exact=lambda x: A.T @ (A @ x - b) - 0.6 * np.sin(2.0 * x),
        c_exact=lambda x: x.copy(),
        J_exact=lambda x: np.eye(n),
        h=OuterFunction("l1", 0.5), x0=2.0 * np.ones(n), L_g=0.5 * lip, L_J=0.0, psi_low=-0.3 * n,
        name="lassoNd",
    )


def _nl_l1_regression(n, seed):
    n = 10 if n is None else n
    m = 2 * n
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / math.sqrt(n)
    x_star = rng.standard_normal(n)
    u = A @ x_star
    b = u + 0.5 * np.sin(u)
    outliers = rng.choice(m, size=max(1, m // 5), replace=False)
    b[outliers] += rng.standard_normal(outliers.size)

    def c(x):
        u = A @ x
        return u + 0.5 * np.sin(u) - b

    def J(x):
        return (1.0 + 0.5 * np.cos(A @ x))[:, None] * A

    # ||J(x) - J(y)||_F <= 0.5 max_i ||a_i|| ||A||_F ||x - y||
    lip_J = 0.5 * float(np.max(np.linalg.norm(A, axis=1))) * float(np.linalg.norm(A))
    return ProblemSpec(
        n=n, m=m,
        f_exact=lambda x: 0.0,
        g_exact=lambda x: np.zeros(n),
        c_exact=c, J_exact=J,
        h=OuterFunction("l1"), x0=np.zeros(n), L_g=0.0, L_J=0.5 * lip_J, psi_low=0.0,
        name="nl-l1-regression",
    )


def _rosenbrock_pen(n, seed):
    def f(x):
        return (1.0 - x[0]) ** 2 + 10.0 * (x[1] - x[0] ** 2) ** 2

    def g(x):
        t = x[1] - x[0] ** 2
        return np.array([-2.0 * (1.0 - x[0]) - 40.0 * x[0] * t, 20.0 * t])

    # g is not globally Lipschitz, so L_g is left unknown
    return ProblemSpec(
        n=2, m=1,
        f_exact=f, g_exact=g,
        c_exact=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 1.0]),
        J_exact=lambda x: np.array([[2.0 * x[0], 2.0 * x[1]]]),
        h=OuterFunction("linf", 2.0), x0=np.array([-1.2, 1.0]), L_g=None, L_J=1.0, psi_low=0.0,
        name="rosenbrock-pen",
    )


def _series_l1(n, seed):
    # f(x) = sum_i 2^-i sin(i x) = Im(z / (1 - z)),  g = Re(z / (1 - z)^2),  z = e^{ix} / 2
    def z(x):
        return 0.5 * np.exp(1j * x[0])

    def f(x):
        w = z(x)
        return float((w / (1.0 - w)).imag)

    def g(x):
        w = z(x)
        return np.array([(w / (1.0 - w) ** 2).real])

    decomp = {
        "f": SeriesDecomposition(lambda i, x: 2.0 ** -i * math.sin(i * x[0]), lambda N: 2.0 ** -N),
        "g": SeriesDecomposition(lambda i, x: np.array([i * 2.0 ** -i * math.cos(i * x[0])]),
                                 lambda N: (N + 2.0) * 2.0 ** -N),
    }
    # sum_i i^2 2^-i = 6 bounds the derivative of g
    return ProblemSpec(
        n=1, m=1, f_exact=f, g_exact=g,
        c_exact=lambda x: x.copy(), J_exact=lambda x: np.eye(1),
        h=OuterFunction("l1", 0.1), x0=np.array([2.0]), L_g=3.0, L_J=0.0, psi_low=-1.0,
        name="series-l1", decompositions=decomp,
    )


def _finite_sum(n, seed):
    n = 2 if n is None else n
    N = 100
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, n))
    b = A @ rng.standard_normal(n) + 0.1 * rng.standard_normal(N)

    def f(x):
        r = A @ x - b
        return float(np.mean(1.0 - np.exp(-0.5 * r * r)))

    def g(x):
        r = A @ x - b
        return A.T @ (r * np.exp(-0.5 * r * r)) / N

    def f_term(i, x):
        r = A[i] @ x - b[i]
        return 1.0 - math.exp(-0.5 * r * r)

    def g_term(i, x):
        r = A[i] @ x - b[i]
        return r * math.exp(-0.5 * r * r) * A[i]

    row_norms = np.linalg.norm(A, axis=1)
    decomp = {
        "f": SumDecomposition(f_term, N, 1.0),
        # |r exp(-r^2/2)| <= exp(-1/2)
        "g": SumDecomposition(g_term, N, math.exp(-0.5) * float(row_norms.max())),
    }
    # |d/dr (r exp(-r^2/2))| <= 1
    L_g = 0.5 * float(np.mean(row_norms ** 2))
    return ProblemSpec(
        n=n, m=n, f_exact=f, g_exact=g,
        c_exact=lambda x: x.copy(), J_exact=lambda x: np.eye(n),
        h=OuterFunction("l1", 0.01), x0=np.full(n, 3.0), L_g=L_g, L_J=0.0, psi_low=0.0,
        name="finite-sum", decompositions=decomp,
    )


_BUILDERS = {
    "quad": _quad,
    "lasso1d": _lasso1d,
    "lassoNd": _lassoNd,
    "nl-l1-regression": _nl_l1_regression,
    "rosenbrock-pen": _rosenbrock_pen,
    "series-l1": _series_l1,
    "finite-sum": _finite_sum,
}


def make_problem(name, n=None, seed=0, h=None):
    """Build a catalogued problem.

    Parameters
    ----------
    name : str
        One of :data:`PROBLEMS`.
    n : int, optional
        Dimension for the problems that accept one (``quad``, ``lassoNd``,
        ``nl-l1-regression``, ``finite-sum``); ignored otherwise.
    seed : int
        Seed for the randomly generated data.
    h : OuterFunction, optional
        Replaces the problem's default outer function.
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {PROBLEMS}") from None
    spec = builder(n, seed)
    return spec if h is None else spec.with_h(h)
