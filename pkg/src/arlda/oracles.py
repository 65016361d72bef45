"""Inexact evaluation of f, g, c and J with certified absolute errors.

Every oracle wraps a :class:`~arlda.core.ProblemSpec` and answers
:class:`OracleRequest` objects.  The returned value is guaranteed to lie
within ``certified_error`` of the exact quantity (absolute value for f,
Euclidean norm for g and c, Frobenius norm for J, which bounds the spectral
norm from above).  All evaluations are recorded in an
:class:`EvaluationLedger`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "QUANTITIES",
    "OracleRequest",
    "OracleResponse",
    "AccuracyFloor",
    "AccuracyFloorReached",
    "EvaluationLedger",
    "LedgerSummary",
    "Oracle",
    "ExactOracle",
    "AdditiveNoiseOracle",
    "TruncatedSeriesOracle",
    "PartialSumOracle",
    "SeriesDecomposition",
    "SumDecomposition",
    "evaluate",
    "ledger_snapshot",
    "make_oracle",
]

QUANTITIES = ("f", "g", "c", "J")


@dataclass(frozen=True)
class OracleRequest:
    point: np.ndarray
    quantity: str
    accuracy: float

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if not self.accuracy >= 0 or math.isnan(self.accuracy):
            raise ValueError("accuracy must be nonnegative")


@dataclass(frozen=True)
class OracleResponse:
    value: object
    certified_error: float
    cost_units: float


@dataclass(frozen=True)
class AccuracyFloor:
    """Smallest accuracy each quantity can be computed to."""

    f: float = 0.0
    g: float = 0.0
    c: float = 0.0
    J: float = 0.0

    def __getitem__(self, quantity):
        return getattr(self, quantity)

    def as_dict(self):
        return {q: self[q] for q in QUANTITIES}


class AccuracyFloorReached(RuntimeError):
    """A request asked for more accuracy than the oracle can deliver."""

    def __init__(self, quantity, requested, floor):
        super().__init__(f"{quantity}: requested accuracy {requested:.3e} is below the floor {floor:.3e}")
        self.quantity = quantity
        self.requested = requested
        self.floor = floor


@dataclass(frozen=True)
class LedgerSummary:
    counts: dict
    iteration_counts: tuple
    min_eps: dict
    shrink_events: int
    successful: int
    unsuccessful: int
    cost_units: dict

    def as_dict(self):
        return {
            "counts": dict(self.counts),
            "min_eps": dict(self.min_eps),
            "shrink_events": self.shrink_events,
            "successful": self.successful,
            "unsuccessful": self.unsuccessful,
            "cost_units": dict(self.cost_units),
        }


@dataclass
class EvaluationLedger:
    """Counters of every evaluation, accuracy shrink and iteration outcome."""

    counts: dict = field(default_factory=lambda: dict.fromkeys(QUANTITIES, 0))
    min_eps: dict = field(default_factory=lambda: dict.fromkeys(QUANTITIES, math.inf))
    cost_units: dict = field(default_factory=lambda: dict.fromkeys(QUANTITIES, 0.0))
    iteration_counts: list = field(default_factory=list)
    shrink_events: int = 0
    successful: int = 0
    unsuccessful: int = 0

    def begin_iteration(self):
        self.iteration_counts.append(dict.fromkeys(QUANTITIES, 0))

    @property
    def current(self):
        if not self.iteration_counts:
            self.begin_iteration()
        return self.iteration_counts[-1]

    def record(self, request, response):
        q = request.quantity
        self.counts[q] += 1
        self.current[q] += 1
        self.min_eps[q] = min(self.min_eps[q], request.accuracy)
        self.cost_units[q] += response.cost_units

    def record_shrink(self):
        self.shrink_events += 1

    def record_outcome(self, accepted):
        if accepted:
            self.successful += 1
        else:
            self.unsuccessful += 1

    def snapshot(self):
        return LedgerSummary(
            counts=dict(self.counts),
            iteration_counts=tuple(dict(c) for c in self.iteration_counts),
            min_eps=dict(self.min_eps),
            shrink_events=self.shrink_events,
            successful=self.successful,
            unsuccessful=self.unsuccessful,
            cost_units=dict(self.cost_units),
        )


def ledger_snapshot(ledger):
    """Immutable copy of the ledger counters (the ledger is not reset)."""
    return ledger.snapshot()


class Oracle:
    """Base class.  Subclasses implement :meth:`_compute`."""

    exact_capable = False
    kind = "base"

    def __init__(self, spec, floor=None):
        self.spec = spec
        self.floor = floor if floor is not None else AccuracyFloor()
        self.ledger = EvaluationLedger()

    def exact(self, quantity, x):
        fn = {"f": self.spec.f_exact, "g": self.spec.g_exact,
              "c": self.spec.c_exact, "J": self.spec.J_exact}[quantity]
        val = fn(x)
        if quantity == "f":
            return float(val)
        return np.array(val, dtype=float).reshape(self.shape(quantity))

    def shape(self, quantity):
        n, m = self.spec.n, self.spec.m
        return {"f": (), "g": (n,), "c": (m,), "J": (m, n)}[quantity]

    def evaluate(self, request):
        q, eps = request.quantity, request.accuracy
        if eps < self.floor[q]:
            raise AccuracyFloorReached(q, eps, self.floor[q])
        if eps == 0 and not self.exact_capable:
            raise ValueError(f"{type(self).__name__} cannot evaluate {q} exactly")
        x = np.asarray(request.point, dtype=float)
        value, err, cost = self._compute(x, q, eps)
        response = OracleResponse(value, float(err), float(cost))
        self.ledger.record(request, response)
        return response

    def __call__(self, x, quantity, accuracy):
        return self.evaluate(OracleRequest(np.asarray(x, dtype=float), quantity, float(accuracy)))

    def _compute(self, x, quantity, eps):  # pragma: no cover - abstract
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind, "floor": self.floor.as_dict()}


def evaluate(oracle, request):
    """Answer ``request`` with ``oracle`` (see :meth:`Oracle.evaluate`)."""
    return oracle.evaluate(request)


class ExactOracle(Oracle):
    """Returns exact values; the requested accuracy is ignored."""

    exact_capable = True
    kind = "exact"

    def _compute(self, x, quantity, eps):
        return self.exact(quantity, x), 0.0, 1.0


class AdditiveNoiseOracle(Oracle):
    """Exact value plus a seeded perturbation whose size is tied to the request.

    ``mode="uniform"`` draws the perturbation norm uniformly in ``[0, eps)``;
    ``mode="adversarial"`` always uses ``0.999 * eps``, the largest error the
    contract allows short of the bound itself.  Directions are uniform on the
    sphere (Frobenius sphere for J).  The generator is consumed in request
    order, so identical request streams give identical responses.
    """

    exact_capable = True

    def __init__(self, spec, seed=0, mode="uniform", floor=None):
        super().__init__(spec, floor)
        if mode not in ("uniform", "adversarial"):
            raise ValueError("mode must be 'uniform' or 'adversarial'")
        self.seed = seed
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    @property
    def kind(self):
        return "noise" if self.mode == "uniform" else "adversarial"

    def _compute(self, x, quantity, eps):
        exact = self.exact(quantity, x)
        if eps == 0:
            return exact, 0.0, 1.0
        radius = 0.999 * eps if self.mode == "adversarial" else eps * self.rng.uniform(0.0, 1.0)
        if quantity == "f":
            sign = 1.0 if self.rng.uniform() < 0.5 else -1.0
            return exact + sign * radius, eps, 1.0
        direction = self.rng.standard_normal(np.shape(exact))
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            return exact, eps, 1.0
        return exact + direction * (radius / nrm), eps, 1.0

    def describe(self):
        return {**super().describe(), "seed": self.seed, "mode": self.mode}


@dataclass(frozen=True)
class SeriesDecomposition:
    """quantity = sum_{i>=1} term(i, x) with tail_bound(N) >= ||sum_{i>N} term(i, x)||."""

    term: Callable[[int, np.ndarray], object]
    tail_bound: Callable[[int], float]


@dataclass(frozen=True)
class SumDecomposition:
    """quantity = (1/N) sum_{i<N} term(i, x) with ||term(i, x)|| <= bound for all x."""

    term: Callable[[int, np.ndarray], object]
    count: int
    bound: float


class TruncatedSeriesOracle(Oracle):
    """Sums the shortest prefix of a series whose tail bound meets the request.

    Quantities without a series decomposition in ``spec.decompositions`` are
    returned exactly.  ``cost_units`` is the number of terms summed.
    """

    exact_capable = False
    kind = "series"

    def __init__(self, spec, max_terms=200, floor=None):
        super().__init__(spec, floor)
        self.max_terms = max_terms
        self.series = {q: d for q, d in spec.decompositions.items() if isinstance(d, SeriesDecomposition)}
        if not self.series:
            raise ValueError(f"problem {spec.name!r} has no series decomposition")

    def terms_needed(self, quantity, eps):
        dec = self.series[quantity]
        for N in range(1, self.max_terms + 1):
            if dec.tail_bound(N) <= eps:
                return N
        raise AccuracyFloorReached(quantity, eps, dec.tail_bound(self.max_terms))

    def _compute(self, x, quantity, eps):
        if quantity not in self.series:
            return self.exact(quantity, x), 0.0, 1.0
        N = self.terms_needed(quantity, eps)
        dec = self.series[quantity]
        total = sum(np.asarray(dec.term(i, x), dtype=float) for i in range(1, N + 1))
        value = float(total) if quantity == "f" else np.asarray(total, dtype=float).reshape(self.shape(quantity))
        return value, dec.tail_bound(N), N

    def describe(self):
        return {**super().describe(), "max_terms": self.max_terms}


class PartialSumOracle(Oracle):
    """Estimates a finite average from a prefix of its summands.

    The estimate is the mean of the first k summands.  With ``||term|| <= B``
    its error is at most ``2 B (N - k) / N``; the smallest k meeting the
    request is used.  ``cost_units`` is k.
    """

    exact_capable = True
    kind = "partial"

    def __init__(self, spec, floor=None):
        super().__init__(spec, floor)
        self.sums = {q: d for q, d in spec.decompositions.items() if isinstance(d, SumDecomposition)}
        if not self.sums:
            raise ValueError(f"problem {spec.name!r} has no finite-sum decomposition")

    @staticmethod
    def tail_bound(dec, k):
        return 2.0 * dec.bound * (dec.count - k) / dec.count

    def summands_needed(self, quantity, eps):
        dec = self.sums[quantity]
        N, B = dec.count, dec.bound
        if B == 0:
            return 1
        # smallest k with 2 B (N - k) / N <= eps
        k = int(min(N, max(1, math.ceil(N - eps * N / (2.0 * B) - 1e-9))))
        while k < N and self.tail_bound(dec, k) > eps:
            k += 1
        return k

    def _compute(self, x, quantity, eps):
        if quantity not in self.sums:
            return self.exact(quantity, x), 0.0, 1.0
        dec = self.sums[quantity]
        k = self.summands_needed(quantity, eps)
        total = sum(np.asarray(dec.term(i, x), dtype=float) for i in range(k)) / k
        value = float(total) if quantity == "f" else np.asarray(total, dtype=float).reshape(self.shape(quantity))
        return value, self.tail_bound(dec, k), k


def make_oracle(kind, spec, seed=0, floor=None, max_terms=200):
    """Build an oracle by its harness name."""
    if kind == "exact":
        return ExactOracle(spec, floor=floor)
    if kind == "noise":
        return AdditiveNoiseOracle(spec, seed=seed, mode="uniform", floor=floor)
    if kind == "adversarial":
        return AdditiveNoiseOracle(spec, seed=seed, mode="adversarial", floor=floor)
    if kind == "series":
        return TruncatedSeriesOracle(spec, max_terms=max_terms, floor=floor)
    if kind == "partial":
        return PartialSumOracle(spec, floor=floor)
    raise ValueError(f"unknown oracle kind {kind!r}")
