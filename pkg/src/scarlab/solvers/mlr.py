"""Multinomial logistic regression trained by minibatch SGD.

The weight matrix is (dim x classes); each feature row is one parameter
unit.  Minibatches are drawn without replacement within an epoch, with the
epoch order keyed by (seed, epoch) so that replays see identical batches.
"""

from __future__ import annotations

import numpy as np

from ..datagen import ClassificationData
from ..params import ParameterState, state_from_arrays
from ..seeding import TAG_STEP, substream
from .base import Solver, SolverConfig


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class LogisticSgd(Solver):
    group = "mlr-row"

    def __init__(self, cfg: SolverConfig, data: ClassificationData):
        super().__init__(cfg, data)
        self.n, self.dim = data.features.shape
        self.classes = data.n_classes
        self.batches_per_epoch = -(-self.n // cfg.batch_size)

    def init_state(self) -> ParameterState:
        arrays = {i: np.zeros(self.classes) for i in range(self.dim)}
        return state_from_arrays(0, arrays, self.group)

    def _weights(self, state: ParameterState) -> np.ndarray:
        return np.stack([state.values_of(i) for i in range(self.dim)])

    def _batch_indices(self, iteration: int) -> np.ndarray:
        epoch, slot = divmod(iteration, self.batches_per_epoch)
        perm = substream(self.cfg.seed, TAG_STEP, epoch).permutation(self.n)
        return perm[slot * self.cfg.batch_size:(slot + 1) * self.cfg.batch_size]

    def step(self, state: ParameterState) -> ParameterState:
        w = self._weights(state)
        idx = self._batch_indices(state.iteration)
        xb = self.data.features[idx]
        yb = self.data.labels[idx]
        probs = _softmax(xb @ w)
        probs[np.arange(len(idx)), yb] -= 1.0
        grad = xb.T @ probs  # summed over the batch, matching the summed loss
        new = w - self.cfg.step_size * grad
        self._check_finite([new], state.iteration)
        return state.with_units({i: new[i] for i in range(self.dim)},
                                iteration=state.iteration + 1)

    def loss(self, state: ParameterState) -> float:
        """Total cross-entropy over the dataset."""
        w = self._weights(state)
        logits = self.data.features @ w
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        picked = shifted[np.arange(self.n), self.data.labels]
        return float((log_norm - picked).sum())

    def accuracy(self, state: ParameterState) -> float:
        w = self._weights(state)
        predicted = (self.data.features @ w).argmax(axis=1)
        return float((predicted == self.data.labels).mean())
