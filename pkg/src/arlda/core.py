"""Problem model, algorithm constants and closed-form bounds.

Everything here is a pure function or a small value object.  The composite
problem is

    psi(x) = f(x) + h(c(x))

with smooth ``f``/``c`` evaluated inexactly and a cheap convex outer norm ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ConfigurationError",
    "UsageError",
    "OuterFunction",
    "ProblemSpec",
    "AlgoConstants",
    "AccuracyState",
    "Evaluation",
    "InexactSnapshot",
    "DecreaseReport",
    "linearized_decrease",
    "model_decrease",
    "decrease_report",
    "error_bound_rhs",
    "psi_error_bound",
    "theta_threshold",
    "theta_global",
    "delta_k_eps",
    "nu_k_bound",
    "nu_bound",
    "sigma_max_bound",
    "tau_bound",
]

H_KINDS = ("zero", "l1", "l2", "linf", "weighted-l1")


class ConfigurationError(ValueError):
    """Invalid constants, problem data or harness configuration."""


class UsageError(RuntimeError):
    """An operation was called with incomplete inputs."""


# ---------------------------------------------------------------------------
# outer function h
# ---------------------------------------------------------------------------


def _project_l1_ball(v, radius):
    """Euclidean projection onto {y : ||y||_1 <= radius} (sort based)."""
    v = np.asarray(v, dtype=float)
    if radius <= 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


@dataclass(frozen=True)
class OuterFunction:
    """Convex, Lipschitz outer function ``h(v) = weight * ||v||``.

    ``kind`` selects the norm: ``zero`` (h = 0), ``l1``, ``l2``, ``linf``, or
    ``weighted-l1`` (an l1 norm whose weight is meant to differ from one).
    Every kind is a scaled norm, so its conjugate is the indicator of a
    dual-norm ball of radius ``weight``; that ball is what the primal-dual
    subproblem solvers project onto.
    """

    kind: str = "zero"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in H_KINDS:
            raise ConfigurationError(f"unknown h kind {self.kind!r}; expected one of {H_KINDS}")
        if not self.weight > 0:
            raise ConfigurationError("h weight must be positive")

    @property
    def _l1_like(self):
        return self.kind in ("l1", "weighted-l1")

    def lipschitz(self, m):
        """Lipschitz constant of h on R^m with respect to the Euclidean norm."""
        if self.kind == "zero":
            return 0.0
        if self._l1_like:
            return self.weight * math.sqrt(m)
        return float(self.weight)

    def value(self, v):
        """h(v); accepts a batch ``(..., m)`` and reduces the last axis."""
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            return np.zeros(v.shape[:-1]) if v.ndim > 1 else 0.0
        if self._l1_like:
            r = np.abs(v).sum(axis=-1)
        elif self.kind == "l2":
            r = np.sqrt((v * v).sum(axis=-1))
        else:
            r = np.abs(v).max(axis=-1) if v.shape[-1] else np.zeros(v.shape[:-1])
        r = self.weight * r
        return float(r) if np.ndim(r) == 0 else r

    __call__ = value

    def project_dual(self, y):
        """Project onto the dual-norm ball of radius ``weight`` (dom h*)."""
        y = np.asarray(y, dtype=float)
        w = self.weight
        if self.kind == "zero":
            return np.zeros_like(y)
        if self._l1_like:
            return np.clip(y, -w, w)
        if self.kind == "l2":
            nrm = np.linalg.norm(y)
            return y if nrm <= w else y * (w / nrm)
        return _project_l1_ball(y, w)

    def prox(self, v, lam):
        """argmin_w h(w) + ||w - v||^2 / (2 lam)."""
        v = np.asarray(v, dtype=float)
        if lam <= 0:
            raise ValueError("prox parameter must be positive")
        t = lam * self.weight
        if self.kind == "zero":
            return v.copy()
        if self._l1_like:
            return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        if self.kind == "l2":
            nrm = np.linalg.norm(v)
            if nrm <= t:
                return np.zeros_like(v)
            return v * (1.0 - t / nrm)
        return v - _project_l1_ball(v, t)

    def prox_conjugate(self, u, lam):
        """prox of h*/lam at u; h* is an indicator so this is a projection.

        Satisfies ``v = prox(v, lam) + lam * prox_conjugate(v / lam, lam)``.
        """
        return self.project_dual(u)

    def support_point(self, v):
        """A point y of the dual ball with y.v = h(v), i.e. a subgradient of h at v."""
        v = np.asarray(v, dtype=float)
        w = self.weight
        y = np.zeros_like(v)
        if self.kind == "zero":
            return y
        if self._l1_like:
            return w * np.sign(v)
        if self.kind == "l2":
            nrm = np.linalg.norm(v)
            return y if nrm == 0 else v * (w / nrm)
        if v.size:
            i = int(np.argmax(np.abs(v)))
            y[i] = w * (np.sign(v[i]) if v[i] != 0 else 0.0)
        return y

    def dual_radius(self, m):
        """Largest Euclidean norm over the dual ball (equals the Lipschitz constant)."""
        return self.lipschitz(m)


# ---------------------------------------------------------------------------
# problem and constants
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """A composite problem with exact reference callables.

    The exact callables are the ground truth that oracles perturb and that
    audits compare against.  ``L_g``/``L_J`` follow the convention
    ``||g(x) - g(y)|| <= 2 L_g ||x - y||`` (same for J); leave them ``None``
    when no global bound is known.
    """

    n: int
    m: int
    f_exact: Callable[[np.ndarray], float]
    g_exact: Callable[[np.ndarray], np.ndarray]
    c_exact: Callable[[np.ndarray], np.ndarray]
    J_exact: Callable[[np.ndarray], np.ndarray]
    h: OuterFunction
    x0: np.ndarray
    L_g: Optional[float] = None
    L_J: Optional[float] = None
    psi_low: Optional[float] = None
    name: str = "custom"
    L_h: Optional[float] = None
    # structure used by the series / partial-sum oracles, keyed by quantity
    decompositions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("dimensions n and m must be at least 1")
        self.x0 = np.asarray(self.x0, dtype=float).reshape(self.n)
        exact_Lh = self.h.lipschitz(self.m)
        if self.L_h is None:
            self.L_h = exact_Lh
        elif not math.isclose(self.L_h, exact_Lh, rel_tol=1e-12, abs_tol=0.0):
            raise ConfigurationError(f"L_h={self.L_h} does not match {self.h.kind} constant {exact_Lh}")
        for name in ("L_g", "L_J"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ConfigurationError(f"{name} must be nonnegative")

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.f_exact(x)) + self.h.value(self.c_exact(x))

    def with_h(self, h):
        """Copy of this problem with another outer function (L_h recomputed)."""
        return ProblemSpec(
            n=self.n, m=self.m, f_exact=self.f_exact, g_exact=self.g_exact,
            c_exact=self.c_exact, J_exact=self.J_exact, h=h, x0=self.x0.copy(),
            L_g=self.L_g, L_J=self.L_J, psi_low=self.psi_low, name=self.name,
            decompositions=dict(self.decompositions),
        )


@dataclass
class AlgoConstants:
    """Constants of the adaptive-regularization method (defaults satisfy Step 0)."""

    eta1: float = 0.1
    eta2: float = 0.9
    gamma1: float = 0.5
    gamma2: float = 2.0
    gamma3: float = 4.0
    alpha: float = 0.5
    kappa_omega: float = 0.5 * 0.1 / 3.0
    gamma_eps: float = 0.1
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    eps_f_max: float = 0.1
    eps_g_max: float = 0.1
    eps_c_max: float = 0.1
    eps_J_max: float = 0.1
    epsilon: float = 1e-3
    max_iterations: int = 10000
    monotonic: bool = False
    # subproblem controls
    gap_tol: float = 1e-2
    subproblem_max_iter: int = 20000

    def validate(self):
        """Raise ConfigurationError unless every initialization constraint holds."""
        problems = []
        if not 0 < self.eta1 <= self.eta2 < 1:
            problems.append("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.gamma1 < 1 < self.gamma2 < self.gamma3:
            problems.append("need 0 < gamma1 < 1 < gamma2 < gamma3")
        if not 0 < self.alpha < 1:
            problems.append("need alpha in (0, 1)")
        if not 0 < self.gamma_eps < 1:
            problems.append("need gamma_eps in (0, 1)")
        if not 0 < self.sigma_min <= self.sigma0:
            problems.append("need 0 < sigma_min <= sigma0")
        if not 0 < self.kappa_omega <= self.alpha * self.eta1 / 3.0 * (1 + 1e-12):
            problems.append("need kappa_omega in (0, alpha*eta1/3]")
        if not 0 < self.epsilon < 1:
            problems.append(f"accuracy level epsilon={self.epsilon} must lie in (0, 1)")
        for name in ("eps_f_max", "eps_g_max", "eps_c_max", "eps_J_max"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        if self.max_iterations < 1:
            problems.append("max_iterations must be positive")
        if not self.gap_tol > 0:
            problems.append("gap_tol must be positive")
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def eps_maxima(self):
        return AccuracyState(self.eps_f_max, self.eps_g_max, self.eps_c_max, self.eps_J_max)


@dataclass
class AccuracyState:
    """Absolute error budgets for f, g, c and J."""

    f: float
    g: float
    c: float
    J: float

    def copy(self):
        return AccuracyState(self.f, self.g, self.c, self.J)

    def noise(self, L_h):
        """eps_g + L_h eps_J + 2 L_h eps_c: the criticality-test noise level."""
        return self.g + L_h * self.J + 2.0 * L_h * self.c

    def shrink_derivatives(self, gamma):
        """Multiply eps_g, eps_c, eps_J by gamma (the in-iteration shrink)."""
        self.g *= gamma
        self.c *= gamma
        self.J *= gamma

    def as_dict(self):
        return {"f": self.f, "g": self.g, "c": self.c, "J": self.J}


# ---------------------------------------------------------------------------
# inexact values at a point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    """A value returned by an oracle, with the accuracy it was requested at."""

    value: object
    eps: float
    certified: float


@dataclass
class InexactSnapshot:
    """Cached inexact f, g, c, J at one point.

    The cache never loosens: an entry is replaced only by an evaluation made
    at a tighter accuracy.
    """

    point: np.ndarray
    f_bar: Optional[Evaluation] = None
    g_bar: Optional[Evaluation] = None
    c_bar: Optional[Evaluation] = None
    J_bar: Optional[Evaluation] = None

    def get(self, quantity):
        return getattr(self, f"{quantity}_bar")

    def satisfies(self, quantity, eps):
        entry = self.get(quantity)
        return entry is not None and entry.certified <= eps

    def store(self, quantity, evaluation):
        old = self.get(quantity)
        if old is not None and old.eps < evaluation.eps:
            raise UsageError(f"refusing to loosen cached {quantity} from {old.eps} to {evaluation.eps}")
        setattr(self, f"{quantity}_bar", evaluation)

    def require(self, *quantities):
        missing = [q for q in quantities if self.get(q) is None]
        if missing:
            raise UsageError(f"snapshot is missing {', '.join(missing)}")

    @property
    def g(self):
        self.require("g")
        return self.g_bar.value

    @property
    def c(self):
        self.require("c")
        return self.c_bar.value

    @property
    def J(self):
        self.require("J")
        return self.J_bar.value

    @property
    def f(self):
        self.require("f")
        return self.f_bar.value

    @classmethod
    def from_arrays(cls, g, c, J, f=None, point=None):
        """Snapshot holding exact (zero-error) arrays; convenient for tests."""
        g = np.atleast_1d(np.asarray(g, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        J = np.asarray(J, dtype=float).reshape(c.size, g.size)
        snap = cls(point=np.zeros(g.size) if point is None else np.asarray(point, dtype=float))
        snap.g_bar = Evaluation(g, 0.0, 0.0)
        snap.c_bar = Evaluation(c, 0.0, 0.0)
        snap.J_bar = Evaluation(J, 0.0, 0.0)
        if f is not None:
            snap.f_bar = Evaluation(float(f), 0.0, 0.0)
        return snap


@dataclass(frozen=True)
class DecreaseReport:
    direction: np.ndarray
    linearized_decrease: float
    model_decrease: float
    norm_v: float


# ---------------------------------------------------------------------------
# closed-form quantities
# ---------------------------------------------------------------------------


def linearized_decrease(snapshot, h, v):
    """-g.v + h(c) - h(c + J v) for the cached inexact g, c, J."""
    snapshot.require("g", "c", "J")
    v = np.asarray(v, dtype=float)
    c = snapshot.c
    return float(-snapshot.g @ v + h.value(c) - h.value(c + snapshot.J @ v))


def model_decrease(snapshot, h, v, sigma):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    v = np.asarray(v, dtype=float)
    return linearized_decrease(snapshot, h, v) - 0.5 * sigma * float(v @ v)


def decrease_report(snapshot, h, v, sigma):
    v = np.asarray(v, dtype=float)
    dl = linearized_decrease(snapshot, h, v)
    nv = float(np.linalg.norm(v))
    return DecreaseReport(v, dl, dl - 0.5 * sigma * nv * nv, nv)


def error_bound_rhs(eps, L_h, norm_v):
    """Bound on |inexact - exact| linearized decrease along a step of norm ``norm_v``."""
    return (eps.g + L_h * eps.J) * norm_v + 2.0 * L_h * eps.c


def psi_error_bound(eps, L_h):
    """Bound on |inexact psi - psi|."""
    return eps.f + L_h * eps.c


def _a_max(eps_max, L_h):
    return eps_max.g + L_h * eps_max.J


def theta_threshold(eps_maxima, L_h, omega_k, sigma_min):
    """Step norm beyond which the step-accuracy test is guaranteed to pass."""
    a = _a_max(eps_maxima, L_h)
    return (a + math.sqrt(a * a + 4.0 * L_h * eps_maxima.c)) / (omega_k * sigma_min)


def theta_global(eps_maxima, L_h, sigma_max, sigma_min):
    """Iteration-independent version of the step-norm threshold (at least 1)."""
    a = _a_max(eps_maxima, L_h)
    return max(1.0, sigma_max / sigma_min * (a + math.sqrt(a * a + 4.0 * L_h * eps_maxima.c)))


def delta_k_eps(epsilon, sigma_k):
    """Guaranteed linearized decrease before termination: min(1, eps/sigma) eps / 16."""
    return min(1.0, epsilon / sigma_k) * epsilon / 16.0


def nu_k_bound(eps_maxima, L_h, theta_k, omega_k, epsilon, delta_k, gamma_eps, use_max=True):
    """Number of accuracy shrinks that can occur within one iteration.

    ``use_max=False`` drops the ``max(1, theta_k)`` safeguard and uses theta_k
    as is.
    """
    a = _a_max(eps_maxima, L_h)
    th = max(1.0, theta_k) if use_max else theta_k
    top = a * th + 2.0 * L_h * eps_maxima.c
    bottom = omega_k * min(0.5 * epsilon, delta_k)
    if top <= 0.0:
        return 0.0
    return abs(math.log(top) - math.log(bottom)) / abs(math.log(gamma_eps))


def nu_bound(eps_maxima, L_h, sigma_max, sigma_min, epsilon, gamma_eps):
    """Iteration-independent shrink bound; a whole-run bound in monotonic mode."""
    theta = theta_global(eps_maxima, L_h, sigma_max, sigma_min)
    inner = _a_max(eps_maxima, L_h) * theta + 2.0 * L_h * eps_maxima.c
    second = (math.log(inner) if inner > 0 else -math.inf) + 2.0 * math.log(4.0 * sigma_max)
    if not math.isfinite(second):
        return math.inf
    return (abs(2.0 * math.log(epsilon)) + abs(second)) / abs(math.log(gamma_eps))


def sigma_max_bound(spec, consts):
    """Upper bound on every regularization parameter, or None without L_g/L_J."""
    if spec.L_g is None or spec.L_J is None:
        return None
    lip = 4.0 + 2.0 * (spec.L_g + spec.L_h * spec.L_J)
    return max(consts.sigma0, consts.gamma3 * lip / (1.0 - consts.eta2), 1.0 / consts.kappa_omega)


def tau_bound(sigma_max, psi0_minus_low, consts, epsilon):
    """Worst-case iteration count to reach an epsilon-critical point.

    Uses epsilon**-2 in the leading factor.
    """
    if psi0_minus_low < 0:
        raise ValueError("psi(x0) - psi_low must be nonnegative")
    lead = math.floor(8.0 * sigma_max * psi0_minus_low / (consts.eta1 * (1.0 - consts.alpha)) / epsilon**2 + 1.0)
    lg2 = math.log(consts.gamma2)
    return lead * (1.0 + abs(math.log(consts.gamma1)) / lg2) + math.log(sigma_max / consts.sigma0) / lg2
