"""Matrix factorization trained by alternating least squares.

Units are the rows of the left factor (ids 0..m-1) and the columns of the
right factor (ids m..m+n-1).  One iteration is a full sweep: every left row
solved against the current right factor, then every right column against
the new left factor.  Each block solve is exact (least squares), so the
summed squared error never increases across a sweep.
"""

from __future__ import annotations

import numpy as np

from ..datagen import RatingsData
from ..params import ParameterState, ParameterUnit
from ..seeding import TAG_INIT, substream
from .base import Solver, SolverConfig


class AlternatingLeastSquares(Solver):
    group = "mf-l-row"

    def __init__(self, cfg: SolverConfig, data: RatingsData):
        super().__init__(cfg, data)
        self.m = data.n_rows
        self.n = data.n_cols
        self.rank = cfg.factors
        order = np.argsort(data.rows, kind="stable")
        self._by_row = self._split(data.rows[order], data.cols[order], data.values[order],
                                   self.m)
        order = np.argsort(data.cols, kind="stable")
        self._by_col = self._split(data.cols[order], data.rows[order], data.values[order],
                                   self.n)

    @staticmethod
    def _split(keys, others, values, count):
        bounds = np.searchsorted(keys, np.arange(count + 1))
        return [(others[bounds[i]:bounds[i + 1]], values[bounds[i]:bounds[i + 1]])
                for i in range(count)]

    def unit_group(self, unit_id: int) -> str:
        return "mf-l-row" if unit_id < self.m else "mf-r-col"

    def init_state(self) -> ParameterState:
        rng = substream(self.cfg.seed, TAG_INIT)
        units = {}
        for i in range(self.m):
            units[i] = ParameterUnit(i, rng.random(self.rank), "mf-l-row")
        for j in range(self.n):
            uid = self.m + j
            units[uid] = ParameterUnit(uid, rng.random(self.rank), "mf-r-col")
        return ParameterState(iteration=0, units=units)

    def _factors(self, state: ParameterState) -> tuple[np.ndarray, np.ndarray]:
        left = np.stack([state.values_of(i) for i in range(self.m)])
        right = np.stack([state.values_of(self.m + j) for j in range(self.n)], axis=1)
        return left, right

    @staticmethod
    def _solve_block(design: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Exact least-squares block update, normal equations with a
        least-squares fallback for rank-deficient blocks."""
        gram = design.T @ design
        try:
            return np.linalg.solve(gram, design.T @ targets)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(design, targets, rcond=None)[0]

    def step(self, state: ParameterState) -> ParameterState:
        left, right = self._factors(state)
        new_left = np.zeros_like(left)
        for i in range(self.m):
            cols, vals = self._by_row[i]
            if cols.size:
                new_left[i] = self._solve_block(right[:, cols].T, vals)
        new_right = np.zeros_like(right)
        for j in range(self.n):
            rows, vals = self._by_col[j]
            if rows.size:
                new_right[:, j] = self._solve_block(new_left[rows], vals)
        self._check_finite([new_left, new_right], state.iteration)
        replaced = {i: new_left[i] for i in range(self.m)}
        replaced.update({self.m + j: new_right[:, j] for j in range(self.n)})
        return state.with_units(replaced, iteration=state.iteration + 1)

    def loss(self, state: ParameterState) -> float:
        """Sum of squared errors over the observed ratings."""
        left, right = self._factors(state)
        predicted = np.einsum("ij,ji->i", left[self.data.rows], right[:, self.data.cols])
        residual = self.data.values - predicted
        return float(residual @ residual)
