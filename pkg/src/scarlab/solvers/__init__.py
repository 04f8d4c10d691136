"""Reference iterative-convergent trainers and their shared interface."""

from __future__ import annotations

from ..datagen import (ClassificationData, CorpusData, Dataset, QuadraticData,
                       RatingsData)
from ..errors import ArgumentError
from ..params import ParameterState
from .base import LOSS_GUARD, ConvergenceCriterion, Solver, SolverConfig
from .lda import CollapsedGibbsLda, TopicAssignments
from .mf import AlternatingLeastSquares
from .mlr import LogisticSgd
from .qp import QpGradientDescent

_SOLVERS = {
    "qp": (QpGradientDescent, QuadraticData),
    "mlr": (LogisticSgd, ClassificationData),
    "mf": (AlternatingLeastSquares, RatingsData),
    "lda": (CollapsedGibbsLda, CorpusData),
}


def make_solver(cfg: SolverConfig, data: Dataset) -> Solver:
    cls, expected = _SOLVERS[cfg.model]
    if not isinstance(data, expected):
        raise ArgumentError(
            f"model {cfg.model!r} expects {expected.__name__}, got {type(data).__name__}")
    return cls(cfg, data)


def step(state: ParameterState, cfg: SolverConfig, data: Dataset) -> ParameterState:
    """One solver iteration.  Prefer a Solver instance inside loops."""
    return make_solver(cfg, data).step(state)


def loss(state: ParameterState, cfg: SolverConfig, data: Dataset) -> float:
    return make_solver(cfg, data).loss(state)


def analytic_optimum(cfg: SolverConfig, data: Dataset) -> ParameterState:
    return make_solver(cfg, data).analytic_optimum()


def rebuild_aux(state: ParameterState, cfg: SolverConfig, data: Dataset) -> ParameterState:
    solver = make_solver(cfg, data)
    if not isinstance(solver, CollapsedGibbsLda):
        raise ArgumentError("only the lda model carries auxiliary state")
    return solver.rebuild_aux(state)


__all__ = [
    "AlternatingLeastSquares",
    "CollapsedGibbsLda",
    "ConvergenceCriterion",
    "LogisticSgd",
    "LOSS_GUARD",
    "QpGradientDescent",
    "Solver",
    "SolverConfig",
    "TopicAssignments",
    "analytic_optimum",
    "loss",
    "make_solver",
    "rebuild_aux",
    "step",
]
