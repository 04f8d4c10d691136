"""Running checkpoints, save strategies, failure injection, and recovery.

The running checkpoint keeps, per parameter unit, the latest saved payload
and the iteration it was saved at.  Saves append to a little-endian binary
log; replaying the log (latest record per unit wins) reconstructs the
in-memory view bit for bit.

Log layout:
    header:  magic "SCARCKPT", format version (u32) = 1
    record:  flag (u8: 0 = float values, 1 = topic assignments),
             unit_id (u64), saved_iteration (u64), value_count (u32),
             then value_count f64 values or u32 topic ids.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ArgumentError, CheckpointLogError, ScarlabError,
                     StructuralError)
from .params import NormMetric, ParameterState, PartitionMap, diff_norm_over
from .perturb import Perturbation
from .solvers.base import Solver

MAGIC = b"SCARCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI")
_RECORD_HEAD = struct.Struct("<BQQI")

FLAG_FLOAT = 0
FLAG_TOPICS = 1

SELECTIONS = ("priority", "round", "random", "full")
RECOVERY_MODES = ("full", "partial")


@dataclass(frozen=True)
class CheckpointPolicy:
    """How much to save how often, and how the subset is chosen.

    interval_iters is the period of partial saves; with save ratio r and a
    full-checkpoint budget of C iterations it is r * C, which keeps bytes
    written per C iterations constant across ratios.
    """

    interval_iters: int
    ratio: float
    selection: str

    def __post_init__(self):
        if self.interval_iters < 1:
            raise ArgumentError("interval_iters must be >= 1")
        if not 0 < self.ratio <= 1:
            raise ArgumentError("ratio must be in (0, 1]")
        if self.selection not in SELECTIONS:
            raise ArgumentError(f"unknown selection {self.selection!r}")
        if self.selection == "full" and self.ratio != 1:
            raise ArgumentError("full selection requires ratio 1")

    def units_per_save(self, n_units: int) -> int:
        return math.ceil(self.ratio * n_units)


@dataclass(frozen=True)
class FailureEvent:
    """A failure at iteration T losing the given units."""

    iteration: int
    lost_units: tuple[int, ...]
    fraction: float

    def __post_init__(self):
        if not self.lost_units:
            raise ArgumentError("a failure must lose at least one unit")
        if self.iteration < 0:
            raise ArgumentError("failure iteration must be non-negative")


@dataclass(frozen=True)
class CheckpointRecord:
    saved_iteration: int
    payload: np.ndarray


def _record_blob(flag: int, unit_id: int, saved_iteration: int,
                 payload: np.ndarray) -> bytes:
    head = _RECORD_HEAD.pack(flag, unit_id, saved_iteration, payload.size)
    if flag == FLAG_FLOAT:
        body = payload.astype("<f8", copy=False).tobytes()
    else:
        body = payload.astype("<u4", copy=False).tobytes()
    return head + body


def record_size(payload: np.ndarray) -> int:
    width = 8 if payload.dtype.kind == "f" else 4
    return _RECORD_HEAD.size + width * payload.size


def _payload_flag(payload: np.ndarray) -> int:
    if payload.dtype.kind == "f":
        return FLAG_FLOAT
    if payload.dtype.kind in "ui":
        return FLAG_TOPICS
    raise ArgumentError(f"unsupported payload dtype {payload.dtype}")


class RunningCheckpoint:
    """Latest-saved payload per unit, optionally backed by an append-only log.

    Appends are write-ahead: the log write happens first and the in-memory
    view is only updated once it succeeds.
    """

    def __init__(self, path: str | Path | None = None):
        self.records: dict[int, CheckpointRecord] = {}
        self.bytes_written = 0
        self._path = Path(path) if path is not None else None
        self._fh = None
        if self._path is not None:
            self._fh = open(self._path, "wb")
            self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION))
            self._fh.flush()

    @classmethod
    def from_state(cls, state: ParameterState, solver: Solver | None = None,
                   path: str | Path | None = None) -> "RunningCheckpoint":
        """Checkpoint initialized with a full save of the given state."""
        ckpt = cls(path=path)
        payloads = {}
        for uid in state.unit_ids():
            payloads[uid] = (solver.checkpoint_payload(state, uid) if solver is not None
                             else state.values_of(uid))
        ckpt.append(payloads, state.iteration)
        return ckpt

    def append(self, payloads: dict[int, np.ndarray], iteration: int) -> int:
        """Persist payloads for the given units; returns bytes appended."""
        blobs = []
        for uid in sorted(payloads):
            payload = payloads[uid]
            blobs.append(_record_blob(_payload_flag(payload), uid, iteration, payload))
        blob = b"".join(blobs)
        if self._fh is not None:
            self._fh.write(blob)
            self._fh.flush()
        # Only now is the in-memory cache allowed to change.
        for uid in sorted(payloads):
            payload = payloads[uid]
            self.records[uid] = CheckpointRecord(iteration, np.array(payload, copy=True))
        self.bytes_written += len(blob)
        return len(blob)

    def payload_of(self, unit_id: int) -> np.ndarray:
        try:
            return self.records[unit_id].payload
        except KeyError:
            raise StructuralError(f"unit {unit_id} has never been checkpointed") from None

    def covers(self, unit_ids) -> bool:
        return all(uid in self.records for uid in unit_ids)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def replay_log(path: str | Path) -> dict[int, CheckpointRecord]:
    """Rebuild the per-unit latest-record view from a checkpoint log."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointLogError(f"{path}: truncated header")
    magic, version = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointLogError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointLogError(f"{path}: unsupported format version {version}")
    records: dict[int, CheckpointRecord] = {}
    offset = _HEADER.size
    while offset < len(raw):
        if offset + _RECORD_HEAD.size > len(raw):
            raise CheckpointLogError(f"{path}: truncated record header at byte {offset}")
        flag, unit_id, iteration, count = _RECORD_HEAD.unpack_from(raw, offset)
        offset += _RECORD_HEAD.size
        if flag == FLAG_FLOAT:
            width, dtype = 8, "<f8"
        elif flag == FLAG_TOPICS:
            width, dtype = 4, "<u4"
        else:
            raise CheckpointLogError(f"{path}: unknown record flag {flag}")
        end = offset + width * count
        if end > len(raw):
            raise CheckpointLogError(f"{path}: truncated payload at byte {offset}")
        payload = np.frombuffer(raw[offset:end], dtype=dtype).copy()
        records[unit_id] = CheckpointRecord(iteration, payload)
        offset = end
    return records


# ---------------------------------------------------------------------------
# Save-set selection
# ---------------------------------------------------------------------------

def unit_drift_distances(current: ParameterState, ckpt: RunningCheckpoint,
                         metric: NormMetric,
                         solver: Solver | None = None) -> dict[int, float]:
    """Per-unit distance between live values and their last-saved values."""
    distances = {}
    for uid in current.unit_ids():
        saved = ckpt.payload_of(uid)
        reference = (solver.compare_values(saved, uid) if solver is not None
                     else saved)
        distances[uid] = metric.unit_distance(uid, current.values_of(uid), reference)
    return distances


def select_for_checkpoint(current: ParameterState, ckpt: RunningCheckpoint,
                          policy: CheckpointPolicy, metric: NormMetric,
                          rr_cursor: int = 0, seed: int | np.random.Generator = 0,
                          solver: Solver | None = None
                          ) -> tuple[tuple[int, ...], int]:
    """Choose the units to save this interval.

    priority: the units that drifted furthest from their saved values
    (distance descending, unit id ascending on ties).  round: the next block
    in unit-id order from the cursor, wrapping.  random: a uniform seeded
    sample.  full: everything.

    Returns (chosen unit ids sorted ascending, new round-robin cursor).
    """
    ids = current.unit_ids()
    if not ckpt.covers(ids):
        raise StructuralError("checkpoint does not cover every unit")
    count = policy.units_per_save(len(ids))
    if policy.selection == "full" or count >= len(ids):
        return tuple(ids), rr_cursor

    if policy.selection == "priority":
        dist = unit_drift_distances(current, ckpt, metric, solver=solver)
        order = sorted(ids, key=lambda u: (-dist[u], u))
        chosen = order[:count]
    elif policy.selection == "round":
        start = rr_cursor % len(ids)
        wrapped = ids[start:] + ids[:start]
        chosen = wrapped[:count]
        rr_cursor = (start + count) % len(ids)
    elif policy.selection == "random":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        chosen = [int(u) for u in rng.choice(ids, size=count, replace=False)]
    else:  # pragma: no cover - guarded by CheckpointPolicy
        raise ArgumentError(f"unknown selection {policy.selection!r}")
    return tuple(sorted(chosen)), rr_cursor


def save_checkpoint(current: ParameterState, ckpt: RunningCheckpoint,
                    chosen, solver: Solver | None = None) -> int:
    """Save the chosen units' payloads at the state's iteration; returns
    bytes appended."""
    payloads = {}
    for uid in chosen:
        if uid not in current.units:
            raise StructuralError(f"unknown unit id {uid}")
        payloads[uid] = (solver.checkpoint_payload(current, uid) if solver is not None
                         else current.values_of(uid))
    return ckpt.append(payloads, current.iteration)


# ---------------------------------------------------------------------------
# Failure injection
# ---------------------------------------------------------------------------

@dataclass
class ShardStore:
    """Simulated shard-sliced view of the parameter values."""

    partition: PartitionMap
    shard_values: list[dict[int, np.ndarray]]
    alive: list[bool]
    lost: set[int] = field(default_factory=set)

    @classmethod
    def from_state(cls, state: ParameterState, partition: PartitionMap) -> "ShardStore":
        if set(partition.assignment) != set(state.units):
            raise StructuralError("partition does not cover the state's units")
        shard_values = [dict() for _ in range(partition.shard_count)]
        for uid in state.unit_ids():
            shard_values[partition.assignment[uid]][uid] = state.values_of(uid)
        return cls(partition=partition, shard_values=shard_values,
                   alive=[True] * partition.shard_count)

    def refresh_from_state(self, state: ParameterState) -> None:
        for uid in state.unit_ids():
            shard = self.partition.assignment[uid]
            if self.alive[shard] and uid not in self.lost:
                self.shard_values[shard][uid] = state.values_of(uid)

    def values_of(self, unit_id: int) -> np.ndarray:
        shard = self.partition.assignment.get(unit_id)
        if shard is None:
            raise StructuralError(f"unknown unit id {unit_id}")
        if not self.alive[shard] or unit_id in self.lost:
            raise ScarlabError(f"unit {unit_id} is on a failed shard and not yet recovered")
        return self.shard_values[shard][unit_id]

    def live_unit_ids(self) -> list[int]:
        out = []
        for shard, alive in enumerate(self.alive):
            if alive:
                out.extend(u for u in self.shard_values[shard] if u not in self.lost)
        return sorted(out)

    def all_unit_ids(self) -> list[int]:
        return sorted(self.partition.assignment)

    def mark_units_lost(self, unit_ids) -> None:
        self.lost.update(int(u) for u in unit_ids)

    def kill_shards(self, shards) -> tuple[int, ...]:
        lost = []
        for shard in shards:
            if not 0 <= shard < self.partition.shard_count:
                raise ArgumentError(f"invalid shard {shard}")
            self.alive[shard] = False
            lost.extend(self.shard_values[shard])
        self.lost.update(lost)
        return tuple(sorted(lost))

    def revive(self, state: ParameterState) -> None:
        """All shards back up, values reloaded from the recovered state."""
        self.alive = [True] * self.partition.shard_count
        self.lost.clear()
        self.refresh_from_state(state)


def inject_failure(store: ShardStore, geom_p: float, target_fraction: float,
                   seed: int, max_iteration: int, offset: int = 0) -> FailureEvent:
    """Plan and apply a failure: iteration offset + geometric(geom_p),
    clamped to max_iteration, losing a uniform random ceil(fraction * n)
    unit subset."""
    if not 0 < geom_p < 1:
        raise ArgumentError("geom_p must be in (0, 1)")
    if not 0 < target_fraction <= 1:
        raise ArgumentError("target_fraction must be in (0, 1]")
    if offset < 0:
        raise ArgumentError("offset must be non-negative")
    if not any(store.alive):
        raise ArgumentError("no shard is alive")
    rng = np.random.default_rng(seed)
    iteration = min(offset + int(rng.geometric(geom_p)), int(max_iteration))
    ids = store.all_unit_ids()
    count = math.ceil(target_fraction * len(ids))
    lost = tuple(sorted(int(u) for u in rng.choice(ids, size=count, replace=False)))
    store.mark_units_lost(lost)
    return FailureEvent(iteration=iteration, lost_units=lost,
                        fraction=len(lost) / len(ids))


def inject_shard_failure(store: ShardStore, kill_count: int, seed: int, geom_p: float,
                         max_iteration: int) -> FailureEvent:
    """Shard-level loss model: kill kill_count shards chosen uniformly."""
    if not 0 < geom_p < 1:
        raise ArgumentError("geom_p must be in (0, 1)")
    alive = [s for s, a in enumerate(store.alive) if a]
    if kill_count < 1 or kill_count > len(alive):
        raise ArgumentError(f"kill_count must be in [1, {len(alive)}]")
    rng = np.random.default_rng(seed)
    iteration = min(int(rng.geometric(geom_p)), int(max_iteration))
    victims = rng.choice(alive, size=kill_count, replace=False)
    lost = store.kill_shards(int(s) for s in victims)
    if not lost:
        raise ArgumentError("killed shards held no units; use more units or fewer shards")
    n = len(store.all_unit_ids())
    return FailureEvent(iteration=iteration, lost_units=lost, fraction=len(lost) / n)


# ---------------------------------------------------------------------------
# Recovery
# ---------------------------------------------------------------------------

def recover(state_at_failure: ParameterState, ckpt: RunningCheckpoint,
            event: FailureEvent, mode: str, metric: NormMetric,
            solver: Solver | None = None
            ) -> tuple[ParameterState, Perturbation, int]:
    """Restore from the running checkpoint after a failure.

    full mode reloads every unit from the checkpoint; partial mode reloads
    only the lost units, leaving survivors untouched.  Returns the recovered
    state, the realized perturbation under the run's metric, and the number
    of log bytes the restore had to read.
    """
    if mode not in RECOVERY_MODES:
        raise ArgumentError(f"unknown recovery mode {mode!r}")
    targets = (state_at_failure.unit_ids() if mode == "full"
               else sorted(event.lost_units))
    for uid in targets:
        if uid not in state_at_failure.units:
            raise StructuralError(f"unknown unit id {uid}")
        if uid not in ckpt.records:
            raise StructuralError(f"unit {uid} lost but never checkpointed")
    payloads = {uid: ckpt.payload_of(uid) for uid in targets}
    if solver is not None:
        recovered = solver.restore_payloads(state_at_failure, payloads)
    else:
        recovered = state_at_failure.with_units(
            {uid: np.asarray(p, dtype=np.float64) for uid, p in payloads.items()})
    norm = diff_norm_over(state_at_failure, recovered, metric, targets)
    bytes_restored = sum(record_size(p) for p in payloads.values())
    perturbation = Perturbation(event.iteration, norm, kind=f"recovery-{mode}")
    return recovered, perturbation, bytes_restored
