"""Perturbation injectors and the ledger that aggregates their norms.

Each injector returns the perturbed state plus a ledger entry whose
recorded norm equals an independent recomputation of the state difference
under the run's metric.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, StructuralError
from .params import (NormMetric, ParameterState, _check_same_structure, diff_norm,
                     diff_norm_over)
from .solvers.base import Solver


@dataclass(frozen=True)
class Perturbation:
    """One recorded corruption of the parameter state."""

    iteration: int
    recorded_norm: float
    kind: str = ""
    unit_deltas: dict[int, np.ndarray] | None = None


@dataclass
class PerturbationLedger:
    """Perturbations of one run, ordered by iteration.

    ``contraction`` is the per-step rate of the unperturbed run; it is
    attached once estimated and consumed by the bound calculators.
    """

    contraction: float | None = None
    entries: list[Perturbation] = field(default_factory=list)

    def add(self, perturbation: Perturbation) -> None:
        iterations = [e.iteration for e in self.entries]
        pos = bisect.bisect_left(iterations, perturbation.iteration)
        if pos < len(iterations) and iterations[pos] == perturbation.iteration:
            raise StructuralError(
                f"ledger already has an entry at iteration {perturbation.iteration}")
        self.entries.insert(pos, perturbation)

    def last_iteration(self) -> int:
        return self.entries[-1].iteration if self.entries else -1


def inject_gaussian(state: ParameterState, scale: float, seed: int,
                    metric: NormMetric) -> tuple[ParameterState, Perturbation]:
    """Add iid normal noise with the given standard deviation to every value.

    Float-valued models only: the noise is applied directly to unit values.
    """
    if scale <= 0:
        raise ArgumentError("scale must be positive")
    rng = np.random.default_rng(seed)
    replaced = {}
    for uid in state.unit_ids():
        values = state.values_of(uid)
        replaced[uid] = values + rng.normal(0.0, scale, size=values.shape)
    perturbed = state.with_units(replaced)
    norm = diff_norm(state, perturbed, metric)
    return perturbed, Perturbation(state.iteration, norm, kind="gaussian")


def inject_adversarial(state: ParameterState, optimum: ParameterState,
                       magnitude: float,
                       metric: NormMetric) -> tuple[ParameterState, Perturbation]:
    """Move the state by `magnitude` along the ray pointing away from the
    optimum.  The displacement itself is Euclidean; only the recorded norm
    uses the run's metric."""
    if magnitude < 0:
        raise ArgumentError("magnitude must be non-negative")
    _check_same_structure(state, optimum)
    if magnitude == 0:
        return state, Perturbation(state.iteration, 0.0, kind="adversarial")
    direction = state.concat_values() - optimum.concat_values()
    length = float(np.linalg.norm(direction))
    if length == 0:
        raise ArgumentError("state equals the optimum: the away direction is undefined")
    unit_dir = direction / length
    replaced = {}
    offset = 0
    for uid in state.unit_ids():
        values = state.values_of(uid)
        replaced[uid] = values + magnitude * unit_dir[offset:offset + values.size]
        offset += values.size
    perturbed = state.with_units(replaced)
    norm = diff_norm(state, perturbed, metric)
    return perturbed, Perturbation(state.iteration, norm, kind="adversarial")


def inject_reset(state: ParameterState, initial: ParameterState, fraction: float,
                 seed: int, metric: NormMetric,
                 solver: Solver | None = None
                 ) -> tuple[ParameterState, Perturbation, tuple[int, ...]]:
    """Reset a uniformly random ceil(fraction * n) subset of units to their
    initial values.

    For models with derived per-unit state (LDA), pass the solver so the
    reset replaces the unit's checkpoint payload (token assignments) and
    rebuilds the derived tables.
    """
    if not 0 < fraction <= 1:
        raise ArgumentError("fraction must be in (0, 1]")
    _check_same_structure(state, initial)
    ids = state.unit_ids()
    count = math.ceil(fraction * len(ids))
    rng = np.random.default_rng(seed)
    lost = tuple(sorted(int(u) for u in rng.choice(ids, size=count, replace=False)))
    if solver is not None:
        payloads = {uid: solver.checkpoint_payload(initial, uid) for uid in lost}
        perturbed = solver.restore_payloads(state, payloads)
    else:
        perturbed = state.with_units({uid: initial.values_of(uid) for uid in lost})
    norm = diff_norm_over(state, perturbed, metric, lost)
    return perturbed, Perturbation(state.iteration, norm, kind="reset"), lost


def round_to_mantissa_bits(values: np.ndarray, bits: int) -> np.ndarray:
    """Round each value to `bits` explicit mantissa bits, nearest-even.

    With the implicit leading bit, a value keeps bits+1 significant binary
    digits; bits = 52 reproduces float64 exactly.
    """
    mantissa, exponent = np.frexp(values)
    scale = float(2 ** (bits + 1))
    return np.ldexp(np.rint(mantissa * scale), exponent - (bits + 1))


def inject_rounding(state: ParameterState, mantissa_bits: int,
                    metric: NormMetric) -> tuple[ParameterState, Perturbation]:
    """Round every value to a reduced-precision representation.

    The element-wise error is below 2**-(mantissa_bits+1) relative, well
    inside the 2**-(mantissa_bits-1) envelope of a (mantissa_bits)-bit
    format.
    """
    if not 1 <= mantissa_bits <= 52:
        raise ArgumentError("mantissa_bits must be in [1, 52]")
    replaced = {uid: round_to_mantissa_bits(state.values_of(uid), mantissa_bits)
                for uid in state.unit_ids()}
    perturbed = state.with_units(replaced)
    norm = diff_norm(state, perturbed, metric)
    return perturbed, Perturbation(state.iteration, norm, kind="rounding")
