"""Scheduled Q-learning current control for a switched reluctance motor phase."""

from ._srmq import (
    ConvergenceError,
    EvaluationError,
    QCoreTable,
    RankDeficientError,
    SafetyAbort,
    ValidationError,
    batch_ls_solve,
    compare,
    default_config,
    discretize,
    oracle,
    policy_iteration,
    q_learning,
    riccati_gain,
    run,
    simulate,
    train,
)

__all__ = [
    "ConvergenceError",
    "EvaluationError",
    "QCoreTable",
    "RankDeficientError",
    "SafetyAbort",
    "ValidationError",
    "batch_ls_solve",
    "compare",
    "default_config",
    "discretize",
    "oracle",
    "policy_iteration",
    "q_learning",
    "riccati_gain",
    "run",
    "simulate",
    "train",
]
