"""Parameter states, unit-level addressing, partitioning, and norms.

A model's parameters are a collection of *units*: the granularity at which
values are partitioned across shards, checkpointed, and lost in failures.
A unit is a matrix row, a factor column, or one document's topic
distribution, depending on the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ArgumentError, StructuralError

GROUPS = ("qp-all", "mlr-row", "mf-l-row", "mf-r-col", "lda-doc")


@dataclass(frozen=True)
class ParameterUnit:
    """One addressable block of parameter values."""

    unit_id: int
    values: np.ndarray
    group: str = "qp-all"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise StructuralError(f"unit {self.unit_id}: values must be 1-D")
        object.__setattr__(self, "values", values)
        if self.group not in GROUPS:
            raise ArgumentError(f"unknown unit group {self.group!r}")


@dataclass
class ParameterState:
    """Full parameter vector at one iteration, addressed by unit.

    ``aux`` carries model-specific non-parameter state (for LDA, the
    token-topic assignments and count tables the unit values derive from).
    States are treated as immutable: operations return new states and share
    unchanged value arrays.
    """

    iteration: int
    units: dict[int, ParameterUnit]
    aux: object | None = None

    def __post_init__(self):
        if self.iteration < 0:
            raise ArgumentError("iteration must be non-negative")
        for uid, unit in self.units.items():
            if uid != unit.unit_id:
                raise StructuralError(f"unit keyed {uid} carries id {unit.unit_id}")

    def unit_ids(self) -> list[int]:
        return sorted(self.units)

    def values_of(self, unit_id: int) -> np.ndarray:
        try:
            return self.units[unit_id].values
        except KeyError:
            raise StructuralError(f"unknown unit id {unit_id}") from None

    def with_units(self, replaced: dict[int, np.ndarray], iteration: int | None = None,
                   aux: object | None = None) -> "ParameterState":
        """New state with the given units' values replaced, others shared."""
        units = dict(self.units)
        for uid, values in replaced.items():
            old = self.units.get(uid)
            if old is None:
                raise StructuralError(f"unknown unit id {uid}")
            units[uid] = ParameterUnit(uid, values, old.group)
        return ParameterState(
            iteration=self.iteration if iteration is None else iteration,
            units=units,
            aux=self.aux if aux is None else aux,
        )

    def concat_values(self) -> np.ndarray:
        """All values concatenated in ascending unit-id order."""
        return np.concatenate([self.units[u].values for u in self.unit_ids()])


def state_from_arrays(iteration: int, arrays: dict[int, np.ndarray], group: str,
                      aux: object | None = None) -> ParameterState:
    units = {int(uid): ParameterUnit(int(uid), arr, group) for uid, arr in arrays.items()}
    return ParameterState(iteration=iteration, units=units, aux=aux)


@dataclass(frozen=True)
class NormMetric:
    """Distance between two states: plain Euclidean, or per-unit total
    variation scaled by positive unit weights (document lengths)."""

    kind: str = "euclidean"
    weights: dict[int, float] | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "scaled_tv"):
            raise ArgumentError(f"unknown norm kind {self.kind!r}")
        if self.weights is not None:
            for uid, w in self.weights.items():
                if not w > 0:
                    raise ArgumentError(f"weight of unit {uid} must be positive, got {w}")

    def weight(self, unit_id: int) -> float:
        if self.weights is None:
            return 1.0
        return self.weights.get(unit_id, 1.0)

    def unit_distance(self, unit_id: int, a: np.ndarray, b: np.ndarray) -> float:
        """Distance contribution of a single unit."""
        if a.shape != b.shape:
            raise StructuralError(f"unit {unit_id}: shape {a.shape} vs {b.shape}")
        d = a - b
        if self.kind == "euclidean":
            return float(np.sqrt(np.dot(d, d)))
        return float(self.weight(unit_id) * 0.5 * np.abs(d).sum())

    def combine(self, unit_distances: Iterable[float]) -> float:
        """Aggregate per-unit distances into the state-level value."""
        if self.kind == "euclidean":
            return float(np.sqrt(sum(d * d for d in unit_distances)))
        return float(sum(unit_distances))


def _check_same_structure(a: ParameterState, b: ParameterState) -> None:
    if a.units.keys() != b.units.keys():
        raise StructuralError("states have different unit sets")
    for uid in a.units:
        if a.units[uid].values.shape != b.units[uid].values.shape:
            raise StructuralError(f"unit {uid} dimensions differ")


def diff_norm(a: ParameterState, b: ParameterState, metric: NormMetric) -> float:
    """Norm of the difference a - b under the given metric."""
    _check_same_structure(a, b)
    if metric.kind == "euclidean":
        total = 0.0
        for uid, unit in a.units.items():
            d = unit.values - b.units[uid].values
            total += float(np.dot(d, d))
        return float(np.sqrt(total))
    total = 0.0
    for uid, unit in a.units.items():
        total += metric.weight(uid) * 0.5 * float(np.abs(unit.values - b.units[uid].values).sum())
    return total


def diff_norm_over(a: ParameterState, b: ParameterState, metric: NormMetric,
                   unit_ids: Iterable[int]) -> float:
    """Norm of a - b restricted to the given units (others treated as equal)."""
    dists = []
    for uid in unit_ids:
        ua = a.units.get(uid)
        ub = b.units.get(uid)
        if ua is None or ub is None:
            raise StructuralError(f"unknown unit id {uid}")
        dists.append(metric.unit_distance(uid, ua.values, ub.values))
    return metric.combine(dists)


def restrict(a: ParameterState, unit_ids: Iterable[int]) -> ParameterState:
    """Fragment of a state containing exactly the given units.

    Fragments carry no auxiliary state; they exist to measure norms over
    coordinate subsets.
    """
    ids = sorted(set(int(u) for u in unit_ids))
    units = {}
    for uid in ids:
        if uid not in a.units:
            raise StructuralError(f"unknown unit id {uid}")
        units[uid] = a.units[uid]
    return ParameterState(iteration=a.iteration, units=units, aux=None)


@dataclass(frozen=True)
class PartitionMap:
    """Assignment of every unit to exactly one shard."""

    assignment: dict[int, int]
    shard_count: int
    seed: int

    def __post_init__(self):
        if self.shard_count < 1:
            raise ArgumentError("shard_count must be >= 1")
        for uid, shard in self.assignment.items():
            if not 0 <= shard < self.shard_count:
                raise StructuralError(f"unit {uid} assigned to invalid shard {shard}")

    def units_of(self, shard: int) -> list[int]:
        return sorted(u for u, s in self.assignment.items() if s == shard)


def random_partition(unit_ids: Iterable[int], shards: int, seed: int) -> PartitionMap:
    """Assign each unit to a shard independently and uniformly at random.

    Deterministic: the same (unit set, shards, seed) always yields the same
    map.
    """
    if shards < 1:
        raise ArgumentError("shards must be >= 1")
    ids = sorted(set(int(u) for u in unit_ids))
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, shards, size=len(ids))
    return PartitionMap(
        assignment={uid: int(s) for uid, s in zip(ids, draws)},
        shard_count=shards,
        seed=int(seed),
    )
