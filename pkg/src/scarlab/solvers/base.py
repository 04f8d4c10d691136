"""Shared solver machinery: configuration, convergence criteria, base class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..datagen import Dataset
from ..errors import ArgumentError, DivergenceError, StructuralError
from ..params import NormMetric, ParameterState, diff_norm

MODELS = ("qp", "mlr", "mf", "lda")

# Any trial whose loss exceeds this is treated as diverged.
LOSS_GUARD = 1e12


@dataclass
class SolverConfig:
    """Per-model training knobs.  Fields irrelevant to a model are ignored."""

    model: str
    max_iters: int
    seed: int = 0
    step_size: float = 0.1          # gradient methods
    batch_size: int = 1             # sgd
    factors: int = 1                # matrix factorization
    topics: int = 2                 # lda
    dirichlet_alpha: float = 1.0
    dirichlet_beta: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ArgumentError(f"unknown model {self.model!r}")
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be >= 1")
        if self.step_size <= 0:
            raise ArgumentError("step_size must be positive")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.factors < 1:
            raise ArgumentError("factors must be >= 1")
        if self.topics < 2:
            raise ArgumentError("topics must be >= 2")
        if self.dirichlet_alpha <= 0 or self.dirichlet_beta <= 0:
            raise ArgumentError("dirichlet hyperparameters must be positive")


@dataclass
class ConvergenceCriterion:
    """When a run counts as converged: a loss target, or a distance to a
    known optimum."""

    metric: str                      # "loss" | "distance"
    threshold: float
    optimum: ParameterState | None = None

    def __post_init__(self):
        if self.metric not in ("loss", "distance"):
            raise ArgumentError(f"unknown criterion metric {self.metric!r}")
        if self.metric == "distance" and self.optimum is None:
            raise ArgumentError("distance criterion requires an optimum state")
        if self.threshold <= 0 and self.metric == "distance":
            raise ArgumentError("distance threshold must be positive")

    def met(self, value: float) -> bool:
        if self.metric == "loss":
            return value <= self.threshold
        return value < self.threshold


class Solver:
    """One trainer bound to its config and dataset.

    Subclasses implement the update map and loss; the base class provides
    the checkpoint payload hooks, which for plain float models move unit
    values verbatim.
    """

    group = "qp-all"

    def __init__(self, cfg: SolverConfig, data: Dataset):
        self.cfg = cfg
        self.data = data

    # -- training ----------------------------------------------------------

    def init_state(self) -> ParameterState:
        raise NotImplementedError

    def step(self, state: ParameterState) -> ParameterState:
        raise NotImplementedError

    def loss(self, state: ParameterState) -> float:
        raise NotImplementedError

    def default_metric(self) -> NormMetric:
        return NormMetric(kind="euclidean")

    def analytic_optimum(self) -> ParameterState:
        raise ArgumentError(f"model {self.cfg.model!r} has no closed-form optimum")

    def metric_value(self, state: ParameterState, criterion: ConvergenceCriterion,
                     metric: NormMetric) -> float:
        if criterion.metric == "loss":
            return self.loss(state)
        return diff_norm(state, criterion.optimum, metric)

    # -- checkpoint payloads -------------------------------------------------

    def checkpoint_payload(self, state: ParameterState, unit_id: int) -> np.ndarray:
        """The array persisted for one unit.  Float models save values."""
        return state.values_of(unit_id)

    def compare_values(self, payload: np.ndarray, unit_id: int) -> np.ndarray:
        """Map a saved payload back to value space for distance computations."""
        return payload

    def restore_payloads(self, state: ParameterState,
                         payloads: dict[int, np.ndarray]) -> ParameterState:
        """State with the given units replaced by saved payloads."""
        replaced = {}
        for uid, payload in payloads.items():
            current = state.values_of(uid)
            if payload.shape != current.shape:
                raise StructuralError(f"unit {uid}: payload shape {payload.shape} "
                                      f"does not match {current.shape}")
            replaced[uid] = np.asarray(payload, dtype=np.float64)
        return state.with_units(replaced)

    # -- guards --------------------------------------------------------------

    def _check_finite(self, arrays, iteration: int) -> None:
        for arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise DivergenceError("solver produced non-finite values", iteration)
