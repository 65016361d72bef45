"""Adaptive regularization with dynamic accuracy for composite problems.

The driver follows the outer loop

    Step 1  criticality check (may tighten eps_g, eps_c, eps_J and repeat)
    Step 2  regularized model step (may tighten and return to Step 1)
    Step 3  acceptance test on the inexact objective
    Step 4  regularization update
    Step 5  relative-accuracy update

and reports one :class:`IterationRecord` per outer iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    AccuracyState,
    ConfigurationError,
    Evaluation,
    InexactSnapshot,
    delta_k_eps,
    nu_k_bound,
    sigma_max_bound,
    tau_bound,
    theta_threshold,
)
from .oracles import AccuracyFloor, AccuracyFloorReached
from .subproblem import NonConvergence, TargetUnreachable, solve_criticality, solve_model

__all__ = [
    "EXIT1",
    "EXIT2",
    "MAX_ITERATIONS",
    "ACCURACY_STALLED",
    "TARGET_UNREACHABLE",
    "PHI_NOISE",
    "STEP_NOISE",
    "FUNCTION_NOISE",
    "SolverState",
    "IterationRecord",
    "TerminationReport",
    "Terminate",
    "Proceed",
    "initialize",
    "feasibility_warnings",
    "step1_check_termination",
    "step2_compute_step",
    "step3_accept",
    "step4_update_sigma",
    "step5_update_accuracy",
    "run",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

EXIT1 = "exit1"
EXIT2 = "exit2"
MAX_ITERATIONS = "max_iterations"
ACCURACY_STALLED = "accuracy_stalled"
TARGET_UNREACHABLE = "target_unreachable"

PHI_NOISE = "phi_noise"
STEP_NOISE = "step_noise"
FUNCTION_NOISE = "function_noise"

CSV_HEADER = ("k", "sigma", "omega", "eps_f", "eps_g", "eps_c", "eps_J", "phibar", "dellbar",
              "snorm", "rho", "accepted", "shrinks", "nf", "ng", "nc", "nJ")

# extra shrinks tolerated beyond ceil(nu_k) before the iteration is declared stalled
SHRINK_SLACK = 5
# rounds of tighter re-solves when a criticality decision falls inside the gap bracket
REFINE_ROUNDS = 4


class _Stall(Exception):
    def __init__(self, case, message, status=ACCURACY_STALLED):
        super().__init__(message)
        self.case = case
        self.status = status


@dataclass
class SolverState:
    spec: object
    consts: object
    k: int
    x: np.ndarray
    sigma: float
    omega: float
    eps: AccuracyState
    snapshot: InexactSnapshot
    ledger: object
    trial: Optional[InexactSnapshot] = None
    shrinks: int = 0
    shrink_source: Optional[str] = None
    shrink_cap: float = math.inf
    nu_k: float = math.nan
    warm_crit: Optional[tuple] = None
    warm_model: Optional[tuple] = None
    last_crit: Optional[tuple] = None  # (solution, noise level, accuracies) of the latest Step 1 solve
    last_crit_point: Optional[np.ndarray] = None

    @property
    def L_h(self):
        return self.spec.L_h

    @property
    def h(self):
        return self.spec.h


@dataclass
class IterationRecord:
    k: int
    sigma: float
    omega: float
    eps_f: float
    eps_g: float
    eps_c: float
    eps_J: float
    phibar: float
    phibar_upper: float
    dellbar: float
    snorm: float
    rho: float
    accepted: bool
    shrinks: int
    nf: int
    ng: int
    nc: int
    nJ: int
    dmbar: float = math.nan
    psi_bar: float = math.nan
    psi_trial_bar: float = math.nan
    nu_k: float = math.nan
    eps_top: dict = field(default_factory=dict)
    x: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    outcome: str = "step"

    def csv_row(self):
        return tuple(getattr(self, name) for name in CSV_HEADER)

    def trace(self):
        """JSON-friendly dict including the vectors used by audits."""
        d = {name: getattr(self, name) for name in CSV_HEADER}
        d.update(
            phibar_upper=self.phibar_upper, dmbar=self.dmbar, psi_bar=self.psi_bar,
            psi_trial_bar=self.psi_trial_bar, nu_k=self.nu_k, eps_top=dict(self.eps_top),
            x=None if self.x is None else [float(v) for v in self.x],
            s=None if self.s is None else [float(v) for v in self.s],
            outcome=self.outcome,
        )
        return d


@dataclass
class TerminationReport:
    status: str
    x: np.ndarray
    phi_bar: float
    iterations: int
    ledger: object
    stall_case: Optional[str] = None
    phi_upper: float = math.nan
    noisy_bound: Optional[float] = None
    message: str = ""
    audits: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status in (EXIT1, EXIT2)

    def as_dict(self):
        return {
            "status": self.status,
            "stall_case": self.stall_case,
            "x": [float(v) for v in self.x],
            "phi_bar": self.phi_bar,
            "phi_upper": self.phi_upper,
            "noisy_bound": self.noisy_bound,
            "iterations": self.iterations,
            "message": self.message,
            "ledger": self.ledger.as_dict(),
            "audits": self.audits,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Terminate:
    status: str
    phi_bar: float
    phi_upper: float


@dataclass(frozen=True)
class Proceed:
    phi_bar: float
    direction: np.ndarray
    phi_upper: float


# ---------------------------------------------------------------------------
# Step 0
# ---------------------------------------------------------------------------


def initialize(spec, consts, oracle=None):
    """Step 0: validate constants and choose the initial accuracy levels.

    The initial relative level is ``omega_0 = min(kappa_omega, 1/sigma_0)``.
    eps_f and eps_c share it equally (weighted by ``max(1, L_h)``) so that
    ``eps_f + L_h eps_c <= omega_0``; with ``L_h = 0`` the whole budget goes
    to eps_f.  eps_g and eps_J start at their maxima.
    """
    consts.validate()
    L_h = spec.L_h
    omega0 = min(consts.kappa_omega, 1.0 / consts.sigma0)
    if L_h == 0:
        eps_f = min(consts.eps_f_max, omega0)
        eps_c = consts.eps_c_max
    else:
        share = omega0 / (2.0 * max(1.0, L_h))
        eps_f = min(consts.eps_f_max, share)
        eps_c = min(consts.eps_c_max, share)
    eps = AccuracyState(eps_f, consts.eps_g_max, eps_c, consts.eps_J_max)
    if eps.f + L_h * eps.c > omega0 * (1 + 1e-12):
        raise ConfigurationError("initial accuracies violate eps_f + L_h eps_c <= omega_0")
    x = spec.x0.copy()
    return SolverState(
        spec=spec, consts=consts, k=0, x=x, sigma=consts.sigma0, omega=omega0, eps=eps,
        snapshot=InexactSnapshot(point=x.copy()),
        ledger=oracle.ledger if oracle is not None else None,
    )


def feasibility_warnings(spec, consts, floor):
    """Compare oracle floors with the accuracy levels a run to ``epsilon`` will need."""
    if floor is None:
        return []
    eps = consts.epsilon
    L_h = spec.L_h
    out = []
    noise = floor.g + L_h * floor.J + 2.0 * L_h * floor.c
    if noise > 0.5 * eps:
        out.append(f"floors give eps_g + L_h eps_J + 2 L_h eps_c = {noise:.3e} > epsilon/2 = {0.5 * eps:.3e}; "
                   "the small-criticality exit is unreachable")
    smax = sigma_max_bound(spec, consts)
    if smax is not None:
        step_noise = (floor.g + L_h * floor.J) * math.sqrt(eps) + 2.0 * L_h * floor.c
        if step_noise > eps / smax:
            out.append(f"floors give step noise {step_noise:.3e} > epsilon/sigma_max = {eps / smax:.3e}; "
                       "step accuracy tests may stall near convergence")
        need_f = eps * (1.0 - consts.eta2) / (consts.gamma3 * (3.0 + 2.0 * (spec.L_g + L_h * spec.L_J)))
        if floor.f > need_f:
            out.append(f"f floor {floor.f:.3e} exceeds the level {need_f:.3e} needed near convergence")
    return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _evaluate_at(oracle, snapshot, quantity, eps):
    if snapshot.satisfies(quantity, eps):
        return snapshot.get(quantity)
    resp = oracle(snapshot.point, quantity, eps)
    ev = Evaluation(resp.value, eps, resp.certified_error)
    snapshot.store(quantity, ev)
    return ev


def _ensure(state, oracle, quantities, case):
    for q in quantities:
        try:
            _evaluate_at(oracle, state.snapshot, q, getattr(state.eps, q))
        except AccuracyFloorReached as exc:
            raise _Stall(case, str(exc)) from exc


def _shrink(state, source):
    state.eps.shrink_derivatives(state.consts.gamma_eps)
    state.shrinks += 1
    state.shrink_source = source
    if state.ledger is not None:
        state.ledger.record_shrink()
    if state.shrinks > state.shrink_cap:
        case = PHI_NOISE if source == "step1" else STEP_NOISE
        raise _Stall(case, f"{state.shrinks} accuracy shrinks exceed the per-iteration cap {state.shrink_cap}")


def _iteration_nu(state):
    c = state.consts
    theta = theta_threshold(c.eps_maxima, state.L_h, state.omega, c.sigma_min)
    delta = delta_k_eps(c.epsilon, state.sigma)
    return nu_k_bound(c.eps_maxima, state.L_h, theta, state.omega, c.epsilon, delta, c.gamma_eps)


def _solve_crit(state, abs_tol, subproblem=solve_criticality):
    c = state.consts
    try:
        sol = subproblem(state.snapshot, state.h, gap_tol=c.gap_tol, max_iter=c.subproblem_max_iter,
                                abs_tol=abs_tol, warm_start=state.warm_crit)
    except NonConvergence as exc:
        # the bracket is still certified; decisions below only use it conservatively
        log.debug("criticality solve stopped early: %s", exc)
        sol = exc.solution
    state.warm_crit = (sol.direction, sol.dual)
    return sol


# ---------------------------------------------------------------------------
# Steps 1-5
# ---------------------------------------------------------------------------


def step1_check_termination(state, oracle, subproblem=solve_criticality):
    """Step 1 with its accuracy loop.

    Returns :class:`Terminate` or :class:`Proceed`.  Tests that require the
    criticality measure to be small use the certified upper bound of the
    subproblem bracket; the test that requires it to dominate the noise uses
    the attained lower bound.
    """
    c = state.consts
    eps_target = c.epsilon
    while True:
        # a floor breach right after a Step 2 shrink is charged to the step test
        case = STEP_NOISE if state.shrink_source == "step2" else PHI_NOISE
        _ensure(state, oracle, ("g", "c", "J"), case)
        noise = state.eps.noise(state.L_h)
        omega = state.omega
        sol = _solve_crit(state, 1e-12, subproblem)
        thresholds = [eps_target / (1.0 + omega), 0.5 * eps_target]
        if omega > 0:
            thresholds.append(noise / omega)
        for _ in range(REFINE_ROUNDS):
            lo, hi = sol.phi_bar, sol.phi_upper
            if not any(lo < t <= hi for t in thresholds) or hi - lo <= 1e-15 * max(1.0, hi):
                break
            sol = _solve_crit(state, 0.01 * (hi - lo), subproblem)
        lo, hi = sol.phi_bar, sol.phi_upper
        state.last_crit = (sol, noise, state.eps.copy())
        state.last_crit_point = state.x.copy()
        if noise <= omega * lo:
            if hi <= eps_target / (1.0 + omega):
                return Terminate(EXIT1, lo, hi)
            return Proceed(lo, sol.direction, hi)
        if hi <= 0.5 * eps_target and noise <= 0.5 * eps_target:
            return Terminate(EXIT2, lo, hi)
        _shrink(state, "step1")


def step2_compute_step(state, oracle, phi_bar, subproblem=solve_model):
    """Step 2: model step plus its accuracy test.

    Returns the :class:`~arlda.subproblem.ModelSolution` when the step's
    linearized decrease dominates its noise, or ``None`` after tightening the
    accuracies (the caller then returns to Step 1).
    """
    c = state.consts
    sigma = state.sigma
    target = 0.25 * min(1.0, phi_bar / sigma) * phi_bar
    try:
        sol = subproblem(state.snapshot, state.h, sigma, target, gap_tol=c.gap_tol,
                          max_iter=c.subproblem_max_iter, early_exit=True, warm_start=state.warm_model)
    except TargetUnreachable as exc:
        raise _Stall(STEP_NOISE, str(exc), status=TARGET_UNREACHABLE) from exc
    except NonConvergence as exc:
        raise _Stall(STEP_NOISE, f"model subproblem: {exc}") from exc
    state.warm_model = (sol.step, sol.dual)
    rep = sol.report
    eps = state.eps
    lhs = (eps.g + state.L_h * eps.J) * rep.norm_v + 2.0 * state.L_h * eps.c
    if lhs <= state.omega * rep.linearized_decrease:
        return sol
    _shrink(state, "step2")
    return None


def step3_accept(state, oracle, s, decrease):
    """Step 3: tighten eps_f, evaluate the trial point and form the ratio.

    ``decrease`` is the :class:`~arlda.core.DecreaseReport` of step ``s``.
    Returns ``(rho, accepted, psi_bar, psi_trial_bar)``; on acceptance the
    state moves to the trial point and keeps its f and c values.
    """
    c = state.consts
    dl = decrease.linearized_decrease
    while state.eps.f > state.omega * dl:
        state.eps.f *= c.gamma_eps
    try:
        f_k = _evaluate_at(oracle, state.snapshot, "f", state.eps.f)
        trial = InexactSnapshot(point=state.x + np.asarray(s, dtype=float))
        f_plus = _evaluate_at(oracle, trial, "f", state.eps.f)
        c_plus = _evaluate_at(oracle, trial, "c", state.eps.c)
    except AccuracyFloorReached as exc:
        raise _Stall(FUNCTION_NOISE, str(exc)) from exc
    h = state.h
    psi_bar = f_k.value + h.value(state.snapshot.c)
    psi_trial = f_plus.value + h.value(c_plus.value)
    rho = (psi_bar - psi_trial) / dl
    accepted = rho >= c.eta1
    state.trial = trial
    if accepted:
        state.x = trial.point.copy()
        state.snapshot = trial
    return rho, accepted, psi_bar, psi_trial


def step4_update_sigma(state, rho):
    """Step 4: shrink, keep or grow sigma (the least aggressive admissible choice)."""
    c = state.consts
    if rho >= c.eta2:
        state.sigma = max(c.sigma_min, c.gamma1 * state.sigma)
    elif rho >= c.eta1:
        pass
    else:
        state.sigma = c.gamma2 * state.sigma
    return state.sigma


def step5_update_accuracy(state):
    """Step 5: recompute omega from sigma and rescale the accuracy levels.

    Standard mode scales every eps by ``omega_new / omega_old`` (capped by its
    maximum); monotonic mode never increases any eps.  Both finish by
    shrinking eps_f and eps_c proportionally if ``eps_f + L_h eps_c`` still
    exceeds the new omega.
    """
    c = state.consts
    old = state.omega
    new = min(c.kappa_omega, 1.0 / state.sigma)
    eps = state.eps
    if not c.monotonic:
        r = new / old
        eps.f = min(c.eps_f_max, r * eps.f)
        eps.g = min(c.eps_g_max, r * eps.g)
        eps.c = min(c.eps_c_max, r * eps.c)
        eps.J = min(c.eps_J_max, r * eps.J)
    total = eps.f + state.L_h * eps.c
    if total > new:
        factor = new / total
        eps.f *= factor
        eps.c *= factor
    state.omega = new
    return new


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _noisy_bound(state, oracle):
    """Noisy-optimality bound max(eps/2, phi_upper) + noise from the last usable criticality solve.

    If no solve succeeded at the current iterate, g, c and J are evaluated at
    the oracle floors first.
    """
    eps_target = state.consts.epsilon
    if state.last_crit is not None and np.array_equal(state.last_crit_point, state.x):
        sol, noise, _ = state.last_crit
        return max(0.5 * eps_target, sol.phi_upper) + noise
    floor = getattr(oracle, "floor", None) or AccuracyFloor()
    eps = AccuracyState(state.eps.f, max(state.eps.g, floor.g), max(state.eps.c, floor.c), max(state.eps.J, floor.J))
    snap = InexactSnapshot(point=state.x.copy())
    try:
        for q in ("g", "c", "J"):
            _evaluate_at(oracle, snap, q, getattr(eps, q))
    except AccuracyFloorReached:
        return None
    try:
        sol = solve_criticality(snap, state.h, gap_tol=state.consts.gap_tol,
                                max_iter=state.consts.subproblem_max_iter)
    except NonConvergence as exc:
        sol = exc.solution
    return max(0.5 * eps_target, sol.phi_upper) + eps.noise(state.L_h)


def _audits(spec, consts, records, report):
    audits = {}
    smax = sigma_max_bound(spec, consts)
    if smax is not None:
        worst = max((r.sigma for r in records), default=consts.sigma0)
        audits["sigma_max"] = {"bound": smax, "measured": worst, "pass": worst <= smax * (1 + 1e-12)}
    worst_excess = -math.inf
    ok = True
    for r in records:
        if math.isfinite(r.nu_k):
            worst_excess = max(worst_excess, r.shrinks - math.ceil(r.nu_k))
            ok = ok and r.shrinks <= math.ceil(r.nu_k)
    audits["shrinks_per_iteration"] = {"worst_excess": worst_excess if records else 0, "pass": ok}
    nf_ok = all(r.nf <= 2 for r in records)
    audits["f_evaluations_per_iteration"] = {"max": max((r.nf for r in records), default=0), "pass": nf_ok}
    if smax is not None and spec.psi_low is not None:
        gap = max(0.0, spec.psi(spec.x0) - spec.psi_low)
        tau = tau_bound(smax, gap, consts, consts.epsilon)
        audits["tau"] = {"bound": tau, "measured": report.iterations, "pass": report.iterations <= tau}
    return audits


def run(spec, consts, oracle, callback=None):
    """Run the method to termination.

    Returns ``(report, records)``: a :class:`TerminationReport` and the list
    of :class:`IterationRecord` (one per outer iteration, the last one
    describing the terminating check when the run converged or stalled).
    ``callback(record)`` is called after each record is produced.
    """
    state = initialize(spec, consts, oracle)
    ledger = oracle.ledger
    warnings = feasibility_warnings(spec, consts, getattr(oracle, "floor", None))
    for w in warnings:
        log.warning(w)
    records = []
    status, stall_case, message = MAX_ITERATIONS, None, ""
    phi_bar, phi_upper, noisy = math.nan, math.nan, None

    def emit(rec):
        records.append(rec)
        if callback is not None:
            callback(rec)

    while state.k < consts.max_iterations:
        ledger.begin_iteration()
        state.shrinks = 0
        state.shrink_source = None
        state.nu_k = _iteration_nu(state)
        state.shrink_cap = math.ceil(state.nu_k) + SHRINK_SLACK
        eps_top = state.eps.as_dict()
        x_k = state.x.copy()
        sol = None
        try:
            while sol is None:
                outcome = step1_check_termination(state, oracle)
                if isinstance(outcome, Terminate):
                    break
                sol = step2_compute_step(state, oracle, outcome.phi_bar)
        except _Stall as stall:
            status, stall_case, message = stall.status, stall.case, str(stall)
            noisy = _noisy_bound(state, oracle)
            if state.last_crit is not None:
                phi_bar, phi_upper = state.last_crit[0].phi_bar, state.last_crit[0].phi_upper
            emit(_terminal_record(state, eps_top, x_k, phi_bar, phi_upper, ledger, "stall"))
            break

        if sol is None:
            status, phi_bar, phi_upper = outcome.status, outcome.phi_bar, outcome.phi_upper
            emit(_terminal_record(state, eps_top, x_k, phi_bar, phi_upper, ledger, status))
            break

        try:
            rho, accepted, psi_bar, psi_trial = step3_accept(state, oracle, sol.step, sol.report)
        except _Stall as stall:
            status, stall_case, message = stall.status, stall.case, str(stall)
            noisy = _noisy_bound(state, oracle)
            phi_bar, phi_upper = outcome.phi_bar, outcome.phi_upper
            emit(_terminal_record(state, eps_top, x_k, phi_bar, phi_upper, ledger, "stall"))
            break

        ledger.record_outcome(accepted)
        rep = sol.report
        eps = state.eps
        counts = ledger.current
        rec = IterationRecord(
            k=state.k, sigma=state.sigma, omega=state.omega, eps_f=eps.f, eps_g=eps.g, eps_c=eps.c, eps_J=eps.J,
            phibar=outcome.phi_bar, phibar_upper=outcome.phi_upper, dellbar=rep.linearized_decrease,
            snorm=rep.norm_v, rho=rho, accepted=bool(accepted), shrinks=state.shrinks,
            nf=counts["f"], ng=counts["g"], nc=counts["c"], nJ=counts["J"], dmbar=rep.model_decrease,
            psi_bar=psi_bar, psi_trial_bar=psi_trial, nu_k=state.nu_k, eps_top=eps_top, x=x_k,
            s=sol.step.copy(),
        )
        step4_update_sigma(state, rho)
        step5_update_accuracy(state)
        emit(rec)
        log.info("k=%d sigma=%.3e phibar=%.3e rho=%.3f shrinks=%d", rec.k, rec.sigma, rec.phibar, rho, rec.shrinks)
        state.k += 1
    else:
        message = f"reached {consts.max_iterations} iterations"

    report = TerminationReport(
        status=status, x=state.x.copy(), phi_bar=phi_bar, iterations=len(records),
        ledger=ledger.snapshot(), stall_case=stall_case, phi_upper=phi_upper, noisy_bound=noisy,
        message=message, warnings=warnings,
    )
    report.audits = _audits(spec, consts, records, report)
    return report, records


def _terminal_record(state, eps_top, x_k, phi_bar, phi_upper, ledger, outcome):
    eps = state.eps
    counts = ledger.current
    return IterationRecord(
        k=state.k, sigma=state.sigma, omega=state.omega, eps_f=eps.f, eps_g=eps.g, eps_c=eps.c, eps_J=eps.J,
        phibar=phi_bar, phibar_upper=phi_upper, dellbar=math.nan, snorm=math.nan, rho=math.nan,
        accepted=False, shrinks=state.shrinks, nf=counts["f"], ng=counts["g"], nc=counts["c"], nJ=counts["J"],
        nu_k=state.nu_k, eps_top=eps_top, x=x_k, outcome=outcome,
    )
