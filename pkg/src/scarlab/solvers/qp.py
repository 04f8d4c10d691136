"""Gradient descent on a strictly convex quadratic.

The one model with a closed-form optimum, which makes it the reference
vehicle for contraction-factor estimation and iteration-cost bounds.
"""

from __future__ import annotations

import numpy as np

from ..datagen import QuadraticData
from ..errors import ArgumentError
from ..params import ParameterState, state_from_arrays
from ..seeding import TAG_INIT, substream
from .base import Solver, SolverConfig


class QpGradientDescent(Solver):
    group = "qp-all"

    def __init__(self, cfg: SolverConfig, data: QuadraticData):
        super().__init__(cfg, data)
        self.matrix = data.matrix
        self.rhs = data.rhs

    def init_state(self) -> ParameterState:
        rng = substream(self.cfg.seed, TAG_INIT)
        x0 = rng.standard_normal(self.data.dim)
        return state_from_arrays(0, {0: x0}, self.group)

    def step(self, state: ParameterState) -> ParameterState:
        x = state.values_of(0)
        new = x - self.cfg.step_size * (self.matrix @ x - self.rhs)
        self._check_finite([new], state.iteration)
        return state.with_units({0: new}, iteration=state.iteration + 1)

    def loss(self, state: ParameterState) -> float:
        x = state.values_of(0)
        return float(0.5 * x @ self.matrix @ x - self.rhs @ x)

    def analytic_optimum(self) -> ParameterState:
        x_star = np.linalg.solve(self.matrix, self.rhs)
        return state_from_arrays(0, {0: x_star}, self.group)

    def contraction_factor(self) -> float:
        """Exact per-step rate: largest |1 - step * eigenvalue|."""
        eigs = np.linalg.eigvalsh(self.matrix)
        factor = float(np.max(np.abs(1.0 - self.cfg.step_size * eigs)))
        if factor >= 1.0:
            raise ArgumentError(
                f"step_size {self.cfg.step_size} does not contract (factor {factor:.4f})")
        return factor
