"""Independent checks: brute-force criticality, derivative checks and run audits.

Nothing here reuses the primal-dual subproblem solvers, so the results can
serve as oracles for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import InexactSnapshot, UsageError, nu_bound, sigma_max_bound, tau_bound

__all__ = [
    "AuditFinding",
    "FiniteDiffReport",
    "ball_maximize",
    "brute_force_phi",
    "brute_force_snapshot_phi",
    "brute_force_model",
    "finite_diff_check",
    "lipschitz_probe",
    "exact_snapshot",
    "audit_run",
    "AUDIT_SLACK",
]

AUDIT_SLACK = 1e-9
BASE_RESOLUTION = 100
POLISH_ROUNDS = 200
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AuditFinding:
    iteration: Optional[int]
    check: str
    bound: float
    measured: float
    passed: bool

    def as_dict(self):
        return {"iteration": self.iteration, "check": self.check, "bound": self.bound,
                "measured": self.measured, "passed": self.passed}


def _finding(k, check, bound, measured, tol=AUDIT_SLACK):
    return AuditFinding(k, check, float(bound), float(measured), bool(measured <= bound + tol))


# ---------------------------------------------------------------------------
# brute-force maximization over a Euclidean ball
# ---------------------------------------------------------------------------


def _level(resolution):
    return max(1, math.ceil(math.log2(resolution)))


def _ball_grid(n, level):
    """Candidate points in the unit ball; the grid at one level contains all coarser levels."""
    if n == 1:
        return np.linspace(-1.0, 1.0, 2 ** level + 1)[:, None]
    if n == 2:
        k = 2 ** level
        ang = 2.0 * math.pi * np.arange(k) / k
        rad = np.arange(1, k + 1) / k
        pts = (rad[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]).reshape(-1, 2)
        return np.vstack([np.zeros((1, 2)), pts])
    k = 2 ** max(1, level - 2)
    axis = np.linspace(-1.0, 1.0, 2 * k + 1)
    cube = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    inside = cube[np.einsum("ij,ij->i", cube, cube) <= 1.0 + 1e-12]
    # sphere points on a latitude-longitude grid
    t = math.pi * np.arange(k + 1) / k
    p = 2.0 * math.pi * np.arange(2 * k) / (2 * k)
    T, P = np.meshgrid(t, p, indexing="ij")
    sphere = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
    return np.vstack([inside, sphere])


def _segment(d, u, radius):
    """Interval of t with ||d + t u|| <= radius for unit u."""
    b = float(d @ u)
    disc = b * b - float(d @ d) + radius * radius
    r = math.sqrt(max(disc, 0.0))
    return -b - r, -b + r


def _line_max(fun, d, u, radius, iters=80):
    lo, hi = _segment(d, u, radius)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fun(d + x1 * u), fun(d + x2 * u)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fun(d + x2 * u)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fun(d + x1 * u)
    cands = [(f1, x1), (f2, x2), (fun(d + lo * u), lo), (fun(d + hi * u), hi)]
    best_val, best_t = max(cands, key=lambda c: c[0])
    return d + best_t * u, best_val


def _polish(fun, d, radius, rounds, seed=0):
    """Golden-section ascent along rotating orthonormal frames, staying in the ball."""
    n = d.size
    rng = np.random.default_rng(seed)
    best = fun(d)
    stale = 0
    for r in range(rounds):
        frame = np.eye(n) if r == 0 else np.linalg.qr(rng.standard_normal((n, n)))[0]
        start = best
        for u in frame.T:
            d_new, val = _line_max(fun, d, u, radius)
            if val > best:
                d, best = d_new, val
        stale = stale + 1 if best - start <= 1e-15 * max(1.0, abs(best)) else 0
        if stale >= 25:
            break
    return d, best


def _ellipsoid(fun, supergrad, n, radius, iters=3000):
    """Central-cut ellipsoid method for a concave function on the ball.

    Kinks along arbitrary subspaces (where coordinate-wise line searches
    stall) are no obstacle since every cut uses a supergradient.
    """
    # P = B B^T is kept in factored form so it stays positive semidefinite
    x = np.zeros(n)
    B = radius * np.eye(n)
    best_x, best = x.copy(), fun(x)
    expand = n / math.sqrt(n * n - 1.0)
    shrink = math.sqrt((n - 1.0) / (n + 1.0)) - 1.0
    for _ in range(iters):
        nx = float(np.linalg.norm(x))
        if nx > radius:
            a = x / nx
        else:
            val = fun(x)
            if val > best:
                best_x, best = x.copy(), val
            a = -np.asarray(supergrad(x), dtype=float)
        Ba = B.T @ a
        width = float(np.linalg.norm(Ba))
        if width <= 1e-300:
            break
        if nx <= radius and width <= 1e-15 * max(1.0, abs(best)):
            break
        u = Ba / width
        Bu = B @ u
        x = x - Bu / (n + 1.0)
        B = expand * (B + shrink * np.outer(Bu, u))
    return best_x, best


def ball_maximize(batch_fun, n, radius=1.0, resolution=BASE_RESOLUTION, supergrad=None):
    """Maximize a concave function over ``||v|| <= radius`` by grid search plus polish.

    ``batch_fun`` maps an ``(k, n)`` array to ``k`` values.  The polish is a
    golden-section ascent along rotating orthonormal frames, followed (when
    ``supergrad`` is given and n >= 2) by an ellipsoid refinement.  The grid
    at a given resolution contains every coarser grid and the polish always
    starts from the same base-resolution seeds, so the returned maximum is
    nondecreasing in ``resolution``.

    Returns
    -------
    point : ndarray
    value : float
    """
    if n > 3:
        raise UsageError("brute-force maximization is limited to n <= 3")
    if resolution < BASE_RESOLUTION:
        raise UsageError(f"resolution must be at least {BASE_RESOLUTION}")

    def one(v):
        return float(batch_fun(v[None, :])[0])

    base = radius * _ball_grid(n, _level(BASE_RESOLUTION))
    base_vals = batch_fun(base)
    order = np.argsort(base_vals)[::-1]
    best_point, best_val = base[order[0]].copy(), float(base_vals[order[0]])
    for i, seed_idx in enumerate(order[:3]):
        p, v = _polish(one, base[seed_idx].copy(), radius, POLISH_ROUNDS, seed=i)
        if v > best_val:
            best_point, best_val = p, v
    if supergrad is not None and n >= 2:
        p, v = _ellipsoid(one, supergrad, n, radius)
        if v > best_val:
            best_point, best_val = p, v
    grid = radius * _ball_grid(n, _level(resolution))
    vals = batch_fun(grid)
    j = int(np.argmax(vals))
    if vals[j] > best_val:
        best_point, best_val = grid[j].copy(), float(vals[j])
    return best_point, best_val


def _lin_decrease_batch(g, c, J, h):
    h_c = h.value(c[None, :])[0] if c.size else 0.0

    def fun(D):
        return -D @ g + h_c - h.value(c[None, :] + D @ J.T)

    return fun


def _lin_supergrad(g, c, J, h):
    def sg(d):
        return -g - J.T @ h.support_point(c + J @ d)

    return sg


def exact_snapshot(spec, x):
    """Snapshot of the exact f, g, c, J at ``x``."""
    x = np.asarray(x, dtype=float)
    return InexactSnapshot.from_arrays(spec.g_exact(x), spec.c_exact(x), spec.J_exact(x),
                                       f=spec.f_exact(x), point=x)


def brute_force_snapshot_phi(snapshot, h, resolution=BASE_RESOLUTION):
    """Max of the linearized decrease over the unit ball for the snapshot's g, c, J."""
    g, c, J = snapshot.g, snapshot.c, snapshot.J
    fun = _lin_decrease_batch(g, c, J, h)
    return ball_maximize(fun, g.size, 1.0, resolution, _lin_supergrad(g, c, J, h))[1]


def brute_force_phi(spec, x, resolution=BASE_RESOLUTION):
    """Exact criticality measure at ``x`` by brute force (n <= 3)."""
    if spec.n > 3:
        raise UsageError("brute_force_phi is limited to n <= 3")
    return brute_force_snapshot_phi(exact_snapshot(spec, x), spec.h, resolution)


def brute_force_model(snapshot, h, sigma, resolution=BASE_RESOLUTION):
    """Max of the model decrease over all steps, by brute force (n <= 3).

    Any maximizer has ``sigma ||s|| <= ||g|| + L_h ||J||``, so the search
    ball has that radius.

    Returns
    -------
    step : ndarray
    value : float
    """
    g, c, J = snapshot.g, snapshot.c, snapshot.J
    radius = (np.linalg.norm(g) + h.lipschitz(c.size) * np.linalg.norm(J, 2)) / sigma
    if radius == 0.0:
        return np.zeros(g.size), 0.0
    lin = _lin_decrease_batch(g, c, J, h)

    lin_sg = _lin_supergrad(g, c, J, h)

    def fun(S):
        return lin(S) - 0.5 * sigma * np.einsum("ij,ij->i", S, S)

    def sg(s):
        return lin_sg(s) - sigma * s

    return ball_maximize(fun, g.size, radius, resolution, sg)


# ---------------------------------------------------------------------------
# derivative checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteDiffReport:
    g_error: float
    J_error: float


def finite_diff_check(spec, x, step=1e-6):
    """Largest deviation between central differences and the exact g and J."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g_fd = np.empty(spec.n)
    J_fd = np.empty((spec.m, spec.n))
    for i in range(spec.n):
        e = np.zeros(spec.n)
        e[i] = step
        g_fd[i] = (spec.f_exact(x + e) - spec.f_exact(x - e)) / (2.0 * step)
        J_fd[:, i] = (np.asarray(spec.c_exact(x + e)) - np.asarray(spec.c_exact(x - e))) / (2.0 * step)
    g_err = float(np.max(np.abs(g_fd - spec.g_exact(x))))
    J_err = float(np.max(np.abs(J_fd - np.asarray(spec.J_exact(x)).reshape(spec.m, spec.n))))
    return FiniteDiffReport(g_err, J_err)


def lipschitz_probe(fn, x, radius=1.0, samples=200, seed=0):
    """Largest observed ``||fn(y) - fn(z)|| / ||y - z||`` over random pairs near ``x``."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for _ in range(samples):
        y = x + radius * rng.uniform(-1, 1, x.size)
        z = x + radius * rng.uniform(-1, 1, x.size)
        dist = np.linalg.norm(y - z)
        if dist > 0:
            worst = max(worst, float(np.linalg.norm(np.asarray(fn(y)) - np.asarray(fn(z)))) / dist)
    return worst


# ---------------------------------------------------------------------------
# run audit
# ---------------------------------------------------------------------------


def audit_run(spec, consts, records):
    """Re-check the bounds a run must satisfy using the exact callables.

    Per iteration: objective error bounds at x_k and at the trial point,
    linearized-decrease error at s_k, the 3/2 omega relative bound, both
    decrease conditions, ratio/acceptance consistency, sigma <= sigma_max,
    shrinks <= ceil(nu_k), at most two f evaluations, and the omega and
    eps_f + L_h eps_c invariants at the top of the iteration.  Globally:
    the iteration count against tau(epsilon) and, in monotonic mode,
    nonincreasing accuracies and total shrinks <= ceil(nu(epsilon)).
    """
    L_h = spec.L_h
    h = spec.h
    smax = sigma_max_bound(spec, consts)
    out = []
    for r in records:
        k = r.k
        if math.isfinite(r.nu_k):
            out.append(_finding(k, "shrinks_le_nu_k", math.ceil(r.nu_k), r.shrinks, tol=0))
        out.append(_finding(k, "f_evaluations", 2, r.nf, tol=0))
        out.append(_finding(k, "omega_rule", 0.0, abs(r.omega - min(consts.kappa_omega, 1.0 / r.sigma))))
        if r.eps_top:
            out.append(_finding(k, "psi_accuracy_invariant", r.omega, r.eps_top["f"] + L_h * r.eps_top["c"]))
        if smax is not None:
            out.append(_finding(k, "sigma_le_sigma_max", smax, r.sigma))
        if r.outcome != "step":
            continue
        x = np.asarray(r.x, dtype=float)
        s = np.asarray(r.s, dtype=float)
        psi_tol = r.eps_f + L_h * r.eps_c
        err_x = abs(r.psi_bar - spec.psi(x))
        err_t = abs(r.psi_trial_bar - spec.psi(x + s))
        out.append(_finding(k, "psi_error", psi_tol, err_x))
        out.append(_finding(k, "psi_trial_error", psi_tol, err_t))
        rel = 1.5 * r.omega * r.dellbar
        out.append(_finding(k, "psi_error_relative", rel, err_x))
        out.append(_finding(k, "psi_trial_error_relative", rel, err_t))
        g, c, J = spec.g_exact(x), np.asarray(spec.c_exact(x)), np.asarray(spec.J_exact(x)).reshape(spec.m, spec.n)
        dl_exact = float(-g @ s + h.value(c) - h.value(c + J @ s))
        bound = (r.eps_g + L_h * r.eps_J) * r.snorm + 2.0 * L_h * r.eps_c
        out.append(_finding(k, "dell_error", bound, abs(r.dellbar - dl_exact)))
        target = 0.25 * min(1.0, r.phibar / r.sigma) * r.phibar
        out.append(_finding(k, "decrease_target", r.dellbar, target))
        out.append(_finding(k, "decrease_quadratic", r.dellbar, 0.5 * r.sigma * r.snorm ** 2))
        out.append(AuditFinding(k, "acceptance_rule", consts.eta1, r.rho,
                                bool(r.accepted) == bool(r.rho >= consts.eta1)))
    steps = [r for r in records if r.outcome == "step"]
    if smax is not None and spec.psi_low is not None:
        tau = tau_bound(smax, max(0.0, spec.psi(spec.x0) - spec.psi_low), consts, consts.epsilon)
        out.append(_finding(None, "iterations_le_tau", tau, len(steps), tol=0))
    if consts.monotonic:
        seq = []
        for r in records:
            seq.append((r.k, r.eps_top))
            seq.append((r.k, {"f": r.eps_f, "g": r.eps_g, "c": r.eps_c, "J": r.eps_J}))
        for (_, prev), (k, cur) in zip(seq, seq[1:]):
            for q in "fgcJ":
                out.append(_finding(k, f"eps_{q}_nonincreasing", prev[q], cur[q], tol=0))
        if smax is not None:
            nu = nu_bound(consts.eps_maxima, L_h, smax, consts.sigma_min, consts.epsilon, consts.gamma_eps)
            out.append(_finding(None, "total_shrinks_le_nu", math.ceil(nu), sum(r.shrinks for r in records), tol=0))
    return out
