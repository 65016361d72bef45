"""Certified solvers for the two convex subproblems of each iteration.

* criticality: ``max_{||d|| <= 1} -g.d + h(c) - h(c + J d)``
* model:       ``min_s g.s + h(c + J s) + sigma/2 ||s||^2``

Both are solved by Chambolle-Pock primal-dual splitting on the saddle form
``min_x max_{y in B*} F(x) + y.(c + J x)``, where ``B*`` is the dual-norm
ball of h.  Every returned solution carries a Fenchel-duality certificate:
the primal value is attained by the returned point and the dual bound is
attained by a feasible dual point, so the bracket is sound regardless of
how far the iteration got.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DecreaseReport, decrease_report, linearized_decrease

__all__ = [
    "SubproblemCertificate",
    "CriticalitySolution",
    "ModelSolution",
    "NonConvergence",
    "TargetUnreachable",
    "CriticalityProblem",
    "ModelProblem",
    "project_unit_ball",
    "prox_h",
    "dual_gap",
    "solve_criticality",
    "solve_model",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SubproblemCertificate:
    """Optimality bracket.  For the maximization (criticality) problem
    ``gap = dual_bound - primal_value``; for the minimization (model) problem
    the values are expressed as decreases as well, so the same formula holds.
    """

    primal_value: float
    dual_bound: float
    gap: float
    iterations_used: int


@dataclass(frozen=True)
class CriticalitySolution:
    direction: np.ndarray
    phi_bar: float
    certificate: SubproblemCertificate
    dual: np.ndarray

    @property
    def phi_upper(self):
        """Certified upper bound on the exact maximum of the linearized decrease."""
        return self.certificate.dual_bound


@dataclass(frozen=True)
class ModelSolution:
    step: np.ndarray
    report: DecreaseReport
    certificate: SubproblemCertificate
    dual: np.ndarray


class NonConvergence(RuntimeError):
    """Iteration budget exhausted before the requested gap; ``solution`` holds the best bracket."""

    def __init__(self, gap, solution):
        super().__init__(f"subproblem did not converge (gap {gap:.3e})")
        self.gap = gap
        self.solution = solution


class TargetUnreachable(RuntimeError):
    """The model optimum is certified and still misses the requested decrease."""

    def __init__(self, best_decrease, gap, target, solution=None):
        super().__init__(
            f"best linearized decrease {best_decrease:.6e} misses target {target:.6e} (gap {gap:.3e})"
        )
        self.best_decrease = best_decrease
        self.gap = gap
        self.target = target
        self.solution = solution


def project_unit_ball(v):
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    return v if nrm <= 1.0 else v / nrm


def prox_h(h, lam, v):
    """argmin_w h(w) + ||w - v||^2 / (2 lam)."""
    return h.prox(v, lam)


class CriticalityProblem:
    """min_{||d||<=1} g.d + h(c + J d); its optimal value is h(c) - phi_bar."""

    def __init__(self, g, c, J, h):
        self.g = np.asarray(g, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.J = np.asarray(J, dtype=float).reshape(self.c.size, self.g.size)
        self.h = h
        self.hc = h.value(self.c)

    @classmethod
    def from_snapshot(cls, snapshot, h):
        snapshot.require("g", "c", "J")
        return cls(snapshot.g, snapshot.c, snapshot.J, h)

    def primal(self, d):
        return float(self.g @ d + self.h.value(self.c + self.J @ d))

    def dual(self, y):
        return float(self.c @ y - np.linalg.norm(self.g + self.J.T @ y))

    def decrease(self, d):
        return self.hc - self.primal(d)

    def best_direction(self, y):
        """Inner minimizer over the ball for a fixed dual point."""
        w = self.g + self.J.T @ y
        nrm = np.linalg.norm(w)
        return -w / nrm if nrm > 0 else np.zeros_like(w)

    def gap(self, d, y):
        return self.primal(d) - self.dual(y)

    def scale(self):
        return (abs(self.hc) + np.linalg.norm(self.g)
                + self.h.dual_radius(self.c.size) * np.linalg.norm(self.J) + 1.0)


class ModelProblem:
    """min_s g.s + h(c + J s) + sigma/2 ||s||^2."""

    def __init__(self, g, c, J, h, sigma):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.g = np.asarray(g, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.J = np.asarray(J, dtype=float).reshape(self.c.size, self.g.size)
        self.h = h
        self.sigma = float(sigma)
        self.hc = h.value(self.c)

    @classmethod
    def from_snapshot(cls, snapshot, h, sigma):
        snapshot.require("g", "c", "J")
        return cls(snapshot.g, snapshot.c, snapshot.J, h, sigma)

    def primal(self, s):
        return float(self.g @ s + self.h.value(self.c + self.J @ s) + 0.5 * self.sigma * (s @ s))

    def dual(self, y):
        w = self.g + self.J.T @ y
        return float(self.c @ y - (w @ w) / (2.0 * self.sigma))

    def best_step(self, y):
        return -(self.g + self.J.T @ y) / self.sigma

    def gap(self, s, y):
        return self.primal(s) - self.dual(y)

    def scale(self):
        r = np.linalg.norm(self.g) + self.h.dual_radius(self.c.size) * np.linalg.norm(self.J)
        return abs(self.hc) + r * r / self.sigma + 1.0


def dual_gap(problem, primal_point, dual_point):
    """Fenchel duality gap of a feasible primal/dual pair (nonnegative up to roundoff)."""
    return problem.gap(np.asarray(primal_point, dtype=float), np.asarray(dual_point, dtype=float))


def _step_sizes(L, primal_radius, dual_radius):
    # tau * sigma * L^2 = 0.99, tau / sigma balanced by the radii of the two sets
    ratio = math.sqrt(max(primal_radius, 1e-12) / max(dual_radius, 1e-12))
    tau = 0.99 * ratio / L
    sig = 0.99 / (ratio * L)
    return tau, sig


def _converged(gap, value, gap_tol, abs_tol, scale):
    return gap <= max(gap_tol * max(value, 1e2 * _EPS * scale), abs_tol)


def solve_criticality(snapshot, h, gap_tol=1e-2, max_iter=20000, *, abs_tol=1e-12,
                      warm_start=None, check_every=10):
    """Maximize the inexact linearized decrease over the unit ball.

    Returns a :class:`CriticalitySolution` whose ``phi_bar`` is attained by
    ``direction`` and whose ``phi_upper`` is a certified upper bound on the
    maximum.  Stops once ``phi_upper - phi_bar <= max(gap_tol * phi_bar,
    abs_tol)`` (with a machine-precision floor).  ``warm_start`` is an
    optional ``(direction, dual)`` pair.

    Raises
    ------
    NonConvergence
        ``max_iter`` iterations did not reach the tolerance; the exception
        carries the best certified solution found.
    """
    prob = CriticalityProblem.from_snapshot(snapshot, h)
    g, c, J = prob.g, prob.c, prob.J
    n, m = g.size, c.size
    L = float(np.linalg.norm(J, 2)) if h.kind != "zero" else 0.0
    scale = prob.scale()

    best = {"lo": -math.inf, "d": None, "hi": math.inf, "y": None}

    def consider(d, y):
        lo = prob.decrease(d)
        if lo > best["lo"]:
            best["lo"], best["d"] = lo, d.copy()
        hi = prob.hc - prob.dual(y)
        if hi < best["hi"]:
            best["hi"], best["y"] = hi, y.copy()

    def solution(iters):
        lo = best["lo"]
        hi = max(best["hi"], lo)
        cert = SubproblemCertificate(lo, hi, hi - lo, iters)
        return CriticalitySolution(best["d"], lo, cert, best["y"])

    y0 = h.support_point(c)
    if L <= 1e-14 * (1.0 + np.linalg.norm(g)):
        consider(prob.best_direction(y0), y0)
        consider(np.zeros(n), y0)
        return solution(0)

    if warm_start is not None:
        d = project_unit_ball(np.asarray(warm_start[0], dtype=float))
        y = h.project_dual(np.asarray(warm_start[1], dtype=float))
    else:
        d = np.zeros(n)
        y = y0
    consider(d, y)
    consider(prob.best_direction(y), h.support_point(c + J @ d))

    tau, sig = _step_sizes(L, 1.0, h.dual_radius(m))
    d_bar = d.copy()
    it = 0
    for it in range(1, max_iter + 1):
        y = h.project_dual(y + sig * (c + J @ d_bar))
        d_new = project_unit_ball(d - tau * (g + J.T @ y))
        d_bar = 2.0 * d_new - d
        d = d_new
        if it % check_every == 0 or it == max_iter:
            consider(d, y)
            consider(prob.best_direction(y), h.support_point(c + J @ d))
            if _converged(best["hi"] - best["lo"], best["lo"], gap_tol, abs_tol, scale):
                return solution(it)
    sol = solution(it)
    if _converged(sol.certificate.gap, sol.phi_bar, gap_tol, abs_tol, scale):
        return sol
    raise NonConvergence(sol.certificate.gap, sol)


def solve_model(snapshot, h, sigma, target_decrease=0.0, gap_tol=1e-2, max_iter=20000, *,
                abs_tol=1e-12, early_exit=True, warm_start=None, check_every=10):
    """Approximately minimize the regularized model.

    The returned step always has a nonnegative model decrease.  With
    ``early_exit`` the solver returns as soon as an iterate has linearized
    decrease at least ``target_decrease`` (and nonnegative model decrease);
    otherwise it runs until the duality gap meets the tolerance.  The
    certificate is expressed in model-decrease units: ``primal_value`` is the
    model decrease of the step, ``dual_bound`` a certified upper bound on the
    best achievable model decrease.

    Raises
    ------
    TargetUnreachable
        The gap-certified best step still misses ``target_decrease``.
    NonConvergence
        Iteration budget exhausted first; carries the best solution.
    """
    prob = ModelProblem.from_snapshot(snapshot, h, sigma)
    g, c, J = prob.g, prob.c, prob.J
    n, m = g.size, c.size
    L = float(np.linalg.norm(J, 2)) if h.kind != "zero" else 0.0
    scale = prob.scale()

    best = {"lo": -math.inf, "s": None, "hi": math.inf, "y": None, "hit": None, "hit_dm": -math.inf}

    def consider(s, y):
        dm = prob.hc - prob.primal(s)
        if dm > best["lo"]:
            best["lo"], best["s"] = dm, s.copy()
        if dm >= 0.0 and dm > best["hit_dm"]:
            if linearized_decrease(snapshot, h, s) >= target_decrease:
                best["hit"], best["hit_dm"] = s.copy(), dm
        hi = prob.hc - prob.dual(y)
        if hi < best["hi"]:
            best["hi"], best["y"] = hi, y.copy()

    def solution(iters, step=None):
        step = best["s"] if step is None else step
        rep = decrease_report(snapshot, h, step, sigma)
        hi = max(best["hi"], best["lo"])
        cert = SubproblemCertificate(rep.model_decrease, hi, hi - rep.model_decrease, iters)
        return ModelSolution(step, rep, cert, best["y"])

    def finish(iters):
        if best["hit"] is not None:
            return solution(iters, best["hit"])
        sol = solution(iters)
        raise TargetUnreachable(sol.report.linearized_decrease, sol.certificate.gap, target_decrease, sol)

    y0 = h.support_point(c)
    if L <= 1e-14 * (1.0 + np.linalg.norm(g)):
        consider(prob.best_step(y0), y0)
        consider(np.zeros(n), y0)
        return finish(0)

    if warm_start is not None:
        s = np.asarray(warm_start[0], dtype=float).copy()
        y = h.project_dual(np.asarray(warm_start[1], dtype=float))
    else:
        s = np.zeros(n)
        y = y0
    consider(np.zeros(n), y)
    consider(s, y)
    consider(prob.best_step(y), h.support_point(c + J @ s))

    primal_radius = (np.linalg.norm(g) + h.dual_radius(m) * L) / prob.sigma
    tau, sig = _step_sizes(L, max(primal_radius, 1e-12), h.dual_radius(m))
    s_bar = s.copy()
    it = 0
    for it in range(1, max_iter + 1):
        y = h.project_dual(y + sig * (c + J @ s_bar))
        s_new = (s - tau * (g + J.T @ y)) / (1.0 + tau * prob.sigma)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * prob.sigma * tau)
        tau *= theta
        sig /= theta
        s_bar = s_new + theta * (s_new - s)
        s = s_new
        if it % check_every == 0 or it == max_iter:
            consider(s, y)
            consider(prob.best_step(y), h.support_point(c + J @ s))
            if early_exit and best["hit"] is not None:
                return solution(it, best["hit"])
            if _converged(best["hi"] - best["lo"], best["lo"], gap_tol, abs_tol, scale):
                return finish(it)
    if _converged(best["hi"] - best["lo"], best["lo"], gap_tol, abs_tol, scale):
        return finish(it)
    if best["hit"] is not None:
        return solution(it, best["hit"])
    sol = solution(it)
    raise NonConvergence(sol.certificate.gap, sol)
