"""Adaptive regularization with dynamic accuracy for inexact composite problems.

Minimizes ``psi(x) = f(x) + h(c(x))`` with smooth ``f``, ``c`` and a convex
norm-like ``h`` when ``f``, its gradient, ``c`` and its Jacobian are only
available to a requested, adjustable accuracy.
"""

import logging

from .core import (
    AccuracyState,
    AlgoConstants,
    ConfigurationError,
    DecreaseReport,
    Evaluation,
    InexactSnapshot,
    OuterFunction,
    ProblemSpec,
    UsageError,
    linearized_decrease,
    model_decrease,
    nu_bound,
    nu_k_bound,
    sigma_max_bound,
    tau_bound,
)
from .oracles import (
    AccuracyFloor,
    AccuracyFloorReached,
    AdditiveNoiseOracle,
    EvaluationLedger,
    ExactOracle,
    Oracle,
    PartialSumOracle,
    TruncatedSeriesOracle,
    make_oracle,
)
from .problems import PROBLEMS, make_problem
from .solver import IterationRecord, SolverState, TerminationReport, run
from .subproblem import solve_criticality, solve_model
from .verify import audit_run, brute_force_phi, finite_diff_check

__all__ = [
    "AccuracyFloor",
    "AccuracyFloorReached",
    "AccuracyState",
    "AdditiveNoiseOracle",
    "AlgoConstants",
    "ConfigurationError",
    "DecreaseReport",
    "Evaluation",
    "EvaluationLedger",
    "ExactOracle",
    "InexactSnapshot",
    "IterationRecord",
    "Oracle",
    "OuterFunction",
    "PROBLEMS",
    "PartialSumOracle",
    "ProblemSpec",
    "SolverState",
    "TerminationReport",
    "TruncatedSeriesOracle",
    "UsageError",
    "audit_run",
    "brute_force_phi",
    "finite_diff_check",
    "linearized_decrease",
    "make_oracle",
    "make_problem",
    "model_decrease",
    "nu_bound",
    "nu_k_bound",
    "run",
    "sigma_max_bound",
    "solve_criticality",
    "solve_model",
    "tau_bound",
]

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
