"""Config-driven experiment runner.

Executes baseline and failure runs with shared seeds, measures rework
iterations, aggregates trial statistics, and writes deterministic CSV and
JSON outputs.  A trial is a pure function of (config, base_seed + trial
index), so trials can run in any order or in parallel without changing the
output bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sps

from . import bounds as bnd
from . import checkpoint as ckpt_mod
from . import datagen
from .checkpoint import (CheckpointPolicy, FailureEvent, RunningCheckpoint,
                         recover, save_checkpoint, select_for_checkpoint)
from .errors import ArgumentError, ConfigError, DivergenceError, NonConvergenceError
from .params import NormMetric, ParameterState, diff_norm, random_partition
from .perturb import (Perturbation, PerturbationLedger, inject_adversarial,
                      inject_gaussian, inject_reset)
from .seeding import TAG_CKPT, TAG_FAILURE, TAG_PERTURB, substream
from .solvers import ConvergenceCriterion, Solver, SolverConfig, make_solver
from .solvers.base import LOSS_GUARD

CSV_COLUMNS = ("trial", "seed", "model", "strategy", "recovery", "fraction", "ratio",
               "T", "rework_iters", "bound", "converged_iter", "bytes_saved",
               "bytes_restored", "censored")

STUDY_MODES = ("gaussian", "adversarial", "reset", "bernoulli")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """Generator name plus its keyword arguments."""

    kind: str  # "qp" | "classification" | "ratings" | "corpus"
    params: tuple[tuple[str, object], ...]

    def kwargs(self) -> dict:
        return dict(self.params)


def make_dataset_spec(kind: str, **kwargs) -> DatasetSpec:
    return DatasetSpec(kind=kind, params=tuple(sorted(kwargs.items())))


def build_dataset(spec: DatasetSpec) -> datagen.Dataset:
    builders = {
        "qp": datagen.gen_qp,
        "classification": datagen.gen_classification,
        "ratings": datagen.gen_ratings,
        "corpus": datagen.gen_corpus,
    }
    if spec.kind not in builders:
        raise ConfigError(f"unknown dataset kind {spec.kind!r}")
    return builders[spec.kind](**spec.kwargs())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce an experiment byte for byte."""

    name: str
    model: str
    dataset: DatasetSpec
    solver: SolverConfig
    criterion_metric: str            # "loss" | "distance"
    criterion_threshold: float
    metric_kind: str                 # "euclidean" | "scaled_tv"
    trials: int = 100
    base_seed: int = 0
    shards: int = 4
    ckpt_interval: int = 16          # full-checkpoint budget C
    ckpt_ratio: float = 1.0
    ckpt_selection: str = "full"
    recovery: str = "partial"
    geom_p: float | None = None      # None: 1 / (max_iters / 3)
    failure_offset: int = 0          # earliest iteration a failure may strike, minus 1
    fraction: float | None = 0.5     # None: no failure injected
    fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    ratios: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
    strategies: tuple[str, ...] = ("priority", "round", "random")
    bounds_enabled: bool = False
    study_mode: str = "gaussian"
    study_scale: float = 1.0
    study_iteration: int | None = None
    warmup_iters: int = 0
    bernoulli_p: float = 0.001

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.criterion_metric not in ("loss", "distance"):
            raise ConfigError(f"unknown criterion metric {self.criterion_metric!r}")
        if self.metric_kind not in ("euclidean", "scaled_tv"):
            raise ConfigError(f"unknown norm kind {self.metric_kind!r}")
        if self.recovery not in ckpt_mod.RECOVERY_MODES:
            raise ConfigError(f"unknown recovery mode {self.recovery!r}")
        if self.ckpt_selection not in ckpt_mod.SELECTIONS:
            raise ConfigError(f"unknown checkpoint selection {self.ckpt_selection!r}")
        if not self.fractions or not self.ratios or not self.strategies:
            raise ConfigError("sweep lists must be non-empty")
        if self.study_mode not in STUDY_MODES:
            raise ConfigError(f"unknown bound-study mode {self.study_mode!r}")
        for r in self.ratios + (self.ckpt_ratio,):
            if not 0 < r <= 1:
                raise ConfigError(f"checkpoint ratio {r} must be in (0, 1]")
            if (self.ckpt_interval * r) != int(self.ckpt_interval * r):
                raise ConfigError(
                    f"ratio {r} times interval {self.ckpt_interval} must be an integer")

    def effective_geom_p(self) -> float:
        if self.geom_p is not None:
            return self.geom_p
        return 1.0 / (self.solver.max_iters / 3.0)

    def failure_clamp(self) -> int:
        """Latest iteration a failure may strike (strictly before 80% of the
        run, leaving room to re-converge)."""
        return max(1, int(0.8 * self.solver.max_iters) - 1)


def policy_for(cfg: ExperimentConfig, ratio: float, selection: str) -> CheckpointPolicy:
    interval = max(1, int(round(cfg.ckpt_interval * ratio)))
    return CheckpointPolicy(interval_iters=interval, ratio=ratio, selection=selection)


def build_metric(cfg: ExperimentConfig, solver: Solver) -> NormMetric:
    if cfg.metric_kind == "scaled_tv":
        return solver.default_metric()
    return NormMetric(kind="euclidean")


def build_criterion(cfg: ExperimentConfig, solver: Solver) -> ConvergenceCriterion:
    if cfg.criterion_metric == "distance":
        return ConvergenceCriterion(metric="distance", threshold=cfg.criterion_threshold,
                                    optimum=solver.analytic_optimum())
    return ConvergenceCriterion(metric="loss", threshold=cfg.criterion_threshold)


# ---------------------------------------------------------------------------
# Core run loop
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    trace: list[float]
    converged_iter: int | None
    perturbations: list[Perturbation]
    bytes_saved: int
    bytes_restored: int
    initial_ckpt_bytes: int
    final_state: ParameterState


def run_training(solver: Solver, criterion: ConvergenceCriterion, metric: NormMetric,
                 max_iters: int, *, initial_state: ParameterState | None = None,
                 policy: CheckpointPolicy | None = None,
                 ckpt_path: str | Path | None = None,
                 event: FailureEvent | None = None, recovery: str = "partial",
                 ckpt_rng: np.random.Generator | None = None,
                 perturb_hook: Callable | None = None,
                 stop_on_convergence: bool = True) -> RunOutcome:
    """Drive one training run, recording the criterion metric per iteration.

    Failures strike before the step of their iteration; checkpoint saves
    happen after the step of iterations divisible by the save interval, with
    a mandatory full save of the starting state.
    """
    state = solver.init_state() if initial_state is None else initial_state
    if state.iteration != 0:
        raise ArgumentError("training must start from an iteration-0 state")
    checkpoint = None
    initial_ckpt_bytes = 0
    rr_cursor = 0
    if policy is not None:
        checkpoint = RunningCheckpoint.from_state(state, solver=solver, path=ckpt_path)
        initial_ckpt_bytes = checkpoint.bytes_written
        if ckpt_rng is None:
            ckpt_rng = np.random.default_rng(0)
    trace: list[float] = []
    perturbations: list[Perturbation] = []
    bytes_restored = 0
    converged_iter = None
    try:
        while True:
            k = state.iteration
            if event is not None and k == event.iteration:
                if checkpoint is None:
                    raise ArgumentError("cannot recover without a checkpoint policy")
                state, perturbation, restored = recover(
                    state, checkpoint, event, recovery, metric, solver=solver)
                perturbations.append(perturbation)
                bytes_restored += restored
            if perturb_hook is not None:
                state, perturbation = perturb_hook(state)
                if perturbation is not None:
                    perturbations.append(perturbation)
            value = solver.metric_value(state, criterion, metric)
            if not math.isfinite(value) or abs(value) > LOSS_GUARD:
                raise DivergenceError("run diverged", k)
            trace.append(value)
            if converged_iter is None and criterion.met(value):
                converged_iter = k
                if stop_on_convergence:
                    break
            if k >= max_iters:
                break
            state = solver.step(state)
            if checkpoint is not None and state.iteration % policy.interval_iters == 0:
                chosen, rr_cursor = select_for_checkpoint(
                    state, checkpoint, policy, metric, rr_cursor=rr_cursor,
                    seed=ckpt_rng, solver=solver)
                save_checkpoint(state, checkpoint, chosen, solver=solver)
    finally:
        if checkpoint is not None:
            checkpoint.close()
    return RunOutcome(
        trace=trace,
        converged_iter=converged_iter,
        perturbations=perturbations,
        bytes_saved=checkpoint.bytes_written if checkpoint is not None else 0,
        bytes_restored=bytes_restored,
        initial_ckpt_bytes=initial_ckpt_bytes,
        final_state=state,
    )


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    model: str
    strategy: str
    recovery: str
    fraction: float | None
    ratio: float | None
    failure_iteration: int | None
    rework_iters: int | None
    bound: float | None
    converged_iter: int | None
    bytes_saved: int
    bytes_restored: int
    censored: bool = False

    def row(self) -> list:
        return [self.trial, self.seed, self.model, self.strategy, self.recovery,
                self.fraction, self.ratio, self.failure_iteration, self.rework_iters,
                self.bound, self.converged_iter, self.bytes_saved, self.bytes_restored,
                self.censored]


def _trial_solver(cfg: ExperimentConfig, data, trial_seed: int) -> Solver:
    return make_solver(replace(cfg.solver, seed=trial_seed), data)


def _failure_plan(cfg: ExperimentConfig, trial_seed: int, n_units: int
                  ) -> tuple[int, np.ndarray]:
    """Shared failure randomness for one trial: the failure iteration and a
    unit permutation whose prefixes give nested lost sets across fractions."""
    rng = substream(trial_seed, TAG_FAILURE)
    iteration = min(cfg.failure_offset + int(rng.geometric(cfg.effective_geom_p())),
                    cfg.failure_clamp())
    perm = rng.permutation(n_units)
    return iteration, perm


def _lost_set(perm: np.ndarray, unit_ids: list[int], fraction: float) -> tuple[int, ...]:
    count = math.ceil(fraction * len(unit_ids))
    ids = np.asarray(unit_ids)
    return tuple(sorted(int(u) for u in ids[perm[:count]]))


def _failure_run(cfg: ExperimentConfig, solver: Solver, criterion, metric,
                 event: FailureEvent, policy: CheckpointPolicy, recovery: str,
                 trial_seed: int, ckpt_path=None) -> RunOutcome:
    return run_training(
        solver, criterion, metric, cfg.solver.max_iters,
        policy=policy, ckpt_path=ckpt_path, event=event, recovery=recovery,
        ckpt_rng=substream(trial_seed, TAG_CKPT))


def _qp_bound(cfg: ExperimentConfig, baseline: RunOutcome,
              outcome: RunOutcome) -> float | None:
    """Theorem-style rework bound; only defined for distance criteria."""
    if not cfg.bounds_enabled or cfg.criterion_metric != "distance":
        return None
    c = bnd.estimate_c(baseline.trace)
    profile = bnd.ConvergenceProfile(c=c, initial_distance=baseline.trace[0],
                                     epsilon=cfg.criterion_threshold)
    ledger = PerturbationLedger(contraction=c)
    for perturbation in outcome.perturbations:
        ledger.add(perturbation)
    return bnd.cost_bound(profile, ledger)


def run_trial(cfg: ExperimentConfig, trial_index: int,
              run_dir: str | Path | None = None) -> TrialResult:
    """One baseline run plus one failure run with identical seeds.

    With no failure fraction configured, the result is the baseline itself
    with zero rework.
    """
    trial_seed = cfg.base_seed + trial_index
    data = build_dataset(cfg.dataset)
    solver = _trial_solver(cfg, data, trial_seed)
    criterion = build_criterion(cfg, solver)
    metric = build_metric(cfg, solver)
    baseline = run_training(solver, criterion, metric, cfg.solver.max_iters)
    if baseline.converged_iter is None:
        raise NonConvergenceError(
            f"baseline for trial {trial_index} never met the criterion",
            trace=baseline.trace)

    if cfg.fraction is None:
        return TrialResult(
            trial=trial_index, seed=trial_seed, model=cfg.model, strategy=cfg.ckpt_selection,
            recovery="", fraction=None, ratio=cfg.ckpt_ratio, failure_iteration=None,
            rework_iters=0, bound=None, converged_iter=baseline.converged_iter,
            bytes_saved=0, bytes_restored=0)

    init_state = solver.init_state()
    partition = random_partition(init_state.unit_ids(), cfg.shards, trial_seed)
    store = ckpt_mod.ShardStore.from_state(init_state, partition)
    failure_seed = int(substream(trial_seed, TAG_FAILURE).integers(0, 2 ** 63))
    event = ckpt_mod.inject_failure(store, cfg.effective_geom_p(), cfg.fraction,
                                    failure_seed, cfg.failure_clamp(),
                                    offset=cfg.failure_offset)
    policy = policy_for(cfg, cfg.ckpt_ratio, cfg.ckpt_selection)
    ckpt_path = (Path(run_dir) / f"ckpt-{trial_index}.scar" if run_dir is not None
                 else None)
    outcome = _failure_run(cfg, solver, criterion, metric, event, policy,
                           cfg.recovery, trial_seed, ckpt_path=ckpt_path)
    store.revive(outcome.final_state)
    censored = outcome.converged_iter is None
    rework = (None if censored
              else bnd.measure_cost(baseline.trace, outcome.trace, criterion))
    bound = None if censored else _qp_bound(cfg, baseline, outcome)
    return TrialResult(
        trial=trial_index, seed=trial_seed, model=cfg.model, strategy=cfg.ckpt_selection,
        recovery=cfg.recovery, fraction=event.fraction, ratio=cfg.ckpt_ratio,
        failure_iteration=event.iteration, rework_iters=rework, bound=bound,
        converged_iter=outcome.converged_iter, bytes_saved=outcome.bytes_saved,
        bytes_restored=outcome.bytes_restored, censored=censored)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _sweep_trial(cfg: ExperimentConfig, trial_index: int) -> list[TrialResult]:
    """All fraction x recovery cells for one trial, against one baseline.

    The failure iteration is shared across cells and the lost sets are
    nested across fractions, so cell differences isolate the recovery
    strategy rather than the failure draw.
    """
    trial_seed = cfg.base_seed + trial_index
    data = build_dataset(cfg.dataset)
    solver = _trial_solver(cfg, data, trial_seed)
    criterion = build_criterion(cfg, solver)
    metric = build_metric(cfg, solver)
    baseline = run_training(solver, criterion, metric, cfg.solver.max_iters)
    if baseline.converged_iter is None:
        raise NonConvergenceError(
            f"baseline for trial {trial_index} never met the criterion",
            trace=baseline.trace)
    unit_ids = solver.init_state().unit_ids()
    failure_iter, perm = _failure_plan(cfg, trial_seed, len(unit_ids))
    policy = policy_for(cfg, cfg.ckpt_ratio, cfg.ckpt_selection)
    results = []
    for fraction in cfg.fractions:
        lost = _lost_set(perm, unit_ids, fraction)
        event = FailureEvent(iteration=failure_iter, lost_units=lost,
                             fraction=len(lost) / len(unit_ids))
        for recovery in ("full", "partial"):
            outcome = _failure_run(cfg, solver, criterion, metric, event, policy,
                                   recovery, trial_seed)
            censored = outcome.converged_iter is None
            rework = (None if censored
                      else bnd.measure_cost(baseline.trace, outcome.trace, criterion))
            results.append(TrialResult(
                trial=trial_index, seed=trial_seed, model=cfg.model,
                strategy=cfg.ckpt_selection, recovery=recovery, fraction=fraction,
                ratio=cfg.ckpt_ratio, failure_iteration=event.iteration,
                rework_iters=rework, bound=None, converged_iter=outcome.converged_iter,
                bytes_saved=outcome.bytes_saved, bytes_restored=outcome.bytes_restored,
                censored=censored))
    return results


def _ckpt_trial(cfg: ExperimentConfig, trial_index: int) -> list[TrialResult]:
    """All ratio x strategy cells plus the traditional full-checkpoint,
    full-recovery baseline cell, for one trial."""
    trial_seed = cfg.base_seed + trial_index
    data = build_dataset(cfg.dataset)
    solver = _trial_solver(cfg, data, trial_seed)
    criterion = build_criterion(cfg, solver)
    metric = build_metric(cfg, solver)
    baseline = run_training(solver, criterion, metric, cfg.solver.max_iters)
    if baseline.converged_iter is None:
        raise NonConvergenceError(
            f"baseline for trial {trial_index} never met the criterion",
            trace=baseline.trace)
    unit_ids = solver.init_state().unit_ids()
    failure_iter, perm = _failure_plan(cfg, trial_seed, len(unit_ids))
    fraction = cfg.fraction if cfg.fraction is not None else 0.5
    lost = _lost_set(perm, unit_ids, fraction)
    event = FailureEvent(iteration=failure_iter, lost_units=lost,
                         fraction=len(lost) / len(unit_ids))

    def one_cell(ratio: float, selection: str, recovery: str) -> TrialResult:
        policy = policy_for(cfg, ratio, selection)
        outcome = _failure_run(cfg, solver, criterion, metric, event, policy,
                               recovery, trial_seed)
        censored = outcome.converged_iter is None
        rework = (None if censored
                  else bnd.measure_cost(baseline.trace, outcome.trace, criterion))
        return TrialResult(
            trial=trial_index, seed=trial_seed, model=cfg.model, strategy=selection,
            recovery=recovery, fraction=event.fraction, ratio=ratio,
            failure_iteration=event.iteration, rework_iters=rework, bound=None,
            converged_iter=outcome.converged_iter, bytes_saved=outcome.bytes_saved,
            bytes_restored=outcome.bytes_restored, censored=censored)

    results = [one_cell(1.0, "full", "full")]  # traditional checkpoint recovery
    for ratio in cfg.ratios:
        for selection in cfg.strategies:
            results.append(one_cell(ratio, selection, "partial"))
    return results


def _map_trials(worker, cfg: ExperimentConfig, parallel: int) -> list[TrialResult]:
    indices = range(cfg.trials)
    if parallel > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(parallel) as pool:
            nested = pool.starmap(worker, [(cfg, i) for i in indices])
    else:
        nested = [worker(cfg, i) for i in indices]
    results = [r for chunk in nested for r in chunk]
    return sorted(results, key=_row_sort_key)


def _row_sort_key(r: TrialResult):
    return (r.strategy, r.recovery, -1.0 if r.fraction is None else r.fraction,
            -1.0 if r.ratio is None else r.ratio, r.trial)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def mean_ci(values, confidence: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a two-sided Student-t confidence interval."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan, math.nan
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, math.nan, math.nan
    sem = float(arr.std(ddof=1) / math.sqrt(arr.size))
    half = float(sps.t.ppf(0.5 + confidence / 2.0, arr.size - 1)) * sem
    return mean, mean - half, mean + half


def summarize_cells(results: list[TrialResult], keys) -> list[dict]:
    """Aggregate rework over trials per cell, keyed by the given fields."""
    cells: dict[tuple, list[TrialResult]] = {}
    for r in results:
        cells.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    summary = []
    for cell_key in sorted(cells, key=lambda t: tuple(str(x) for x in t)):
        rows = cells[cell_key]
        reworks = [r.rework_iters for r in rows if not r.censored]
        mean, lo, hi = mean_ci(reworks)
        entry = dict(zip(keys, cell_key))
        entry.update({
            "n": len(rows),
            "censored": sum(r.censored for r in rows),
            "mean_rework": mean,
            "ci_low": lo,
            "ci_high": hi,
        })
        summary.append(entry)
    return summary


# ---------------------------------------------------------------------------
# Top-level experiment designs
# ---------------------------------------------------------------------------

def run_sweep(cfg: ExperimentConfig, parallel: int = 1) -> tuple[list[TrialResult], dict]:
    """Failure-fraction sweep comparing full and partial recovery."""
    if cfg.trials < 2:
        raise ConfigError("a sweep needs at least 2 trials for confidence intervals")
    results = _map_trials(_sweep_trial, cfg, parallel)
    summary = {
        "experiment": cfg.name,
        "design": "fraction-sweep",
        "model": cfg.model,
        "trials": cfg.trials,
        "cells": summarize_cells(results, ("fraction", "recovery")),
    }
    return results, summary


def run_ckpt_sweep(cfg: ExperimentConfig, parallel: int = 1
                   ) -> tuple[list[TrialResult], dict]:
    """Save-ratio x strategy sweep at a fixed loss fraction, plus the
    traditional full-checkpoint full-recovery reference cell."""
    if cfg.trials < 2:
        raise ConfigError("a sweep needs at least 2 trials for confidence intervals")
    results = _map_trials(_ckpt_trial, cfg, parallel)
    summary = {
        "experiment": cfg.name,
        "design": "ckpt-sweep",
        "model": cfg.model,
        "trials": cfg.trials,
        "fraction": cfg.fraction,
        "cells": summarize_cells(results, ("ratio", "strategy", "recovery")),
        "bytes_per_interval": measure_ckpt_bytes(cfg),
    }
    return results, summary


def measure_ckpt_bytes(cfg: ExperimentConfig, intervals: int = 4) -> list[dict]:
    """Bytes appended per C iterations for each configured ratio.

    Runs a short failure-free training per ratio and reports the appended
    volume excluding the mandatory initial full checkpoint.
    """
    data = build_dataset(cfg.dataset)
    solver = _trial_solver(cfg, data, cfg.base_seed)
    criterion = build_criterion(cfg, solver)
    metric = build_metric(cfg, solver)
    horizon = cfg.ckpt_interval * intervals
    out = []
    for ratio in cfg.ratios:
        policy = policy_for(cfg, ratio, "priority" if ratio < 1 else "full")
        outcome = run_training(solver, criterion, metric, horizon, policy=policy,
                               ckpt_rng=substream(cfg.base_seed, TAG_CKPT),
                               stop_on_convergence=False)
        appended = outcome.bytes_saved - outcome.initial_ckpt_bytes
        out.append({"ratio": ratio, "bytes_per_interval": appended / intervals,
                    "intervals": intervals})
    return out


def run_bound_study(cfg: ExperimentConfig, parallel: int = 1
                    ) -> tuple[list[TrialResult], dict]:
    """Perturb-once (or Bernoulli) runs with measured cost against the
    worst-case bound, on the model with a closed-form optimum."""
    if cfg.model != "qp":
        raise ConfigError("bound studies require the qp model")
    if cfg.criterion_metric != "distance":
        raise ConfigError("bound studies require a distance criterion")
    results, points = [], []
    violations = 0
    measured_count = 0
    for trial_index in range(cfg.trials):
        result, point = _bound_trial(cfg, trial_index)
        results.append(result)
        points.append(point)
        if not result.censored and result.rework_iters is not None:
            measured_count += 1
            if result.rework_iters > result.bound:
                violations += 1
    summary = {
        "experiment": cfg.name,
        "design": "bound-study",
        "mode": cfg.study_mode,
        "trials": cfg.trials,
        "violation_rate": violations / measured_count if measured_count else math.nan,
        "points": points,
    }
    return sorted(results, key=_row_sort_key), summary


def _bound_trial(cfg: ExperimentConfig, trial_index: int) -> tuple[TrialResult, dict]:
    trial_seed = cfg.base_seed + trial_index
    data = build_dataset(cfg.dataset)
    solver = _trial_solver(cfg, data, trial_seed)
    criterion = build_criterion(cfg, solver)
    metric = build_metric(cfg, solver)

    start = solver.init_state()
    for _ in range(cfg.warmup_iters):
        start = solver.step(start)
    start = ParameterState(iteration=0, units=start.units, aux=start.aux)

    baseline = run_training(solver, criterion, metric, cfg.solver.max_iters,
                            initial_state=start)
    if baseline.converged_iter is None:
        raise NonConvergenceError(
            f"bound-study baseline for trial {trial_index} never met the criterion",
            trace=baseline.trace)
    c = bnd.estimate_c(baseline.trace)
    profile = bnd.ConvergenceProfile(c=c, initial_distance=baseline.trace[0],
                                     epsilon=cfg.criterion_threshold)

    target_iter = (cfg.study_iteration if cfg.study_iteration is not None
                   else max(1, baseline.converged_iter // 2))
    rng = substream(trial_seed, TAG_PERTURB)
    hook = _study_hook(cfg, solver, metric, rng, target_iter, start)
    outcome = run_training(solver, criterion, metric, cfg.solver.max_iters,
                           initial_state=start, perturb_hook=hook)
    censored = outcome.converged_iter is None
    ledger = PerturbationLedger(contraction=c)
    for perturbation in outcome.perturbations:
        ledger.add(perturbation)
    bound = bnd.cost_bound(profile, ledger)
    rework = (None if censored
              else bnd.measure_cost(baseline.trace, outcome.trace, criterion))
    total_norm = sum(p.recorded_norm for p in outcome.perturbations)
    point = {
        "trial": trial_index,
        "norm": total_norm,
        "delta_T": bnd.delta_T(ledger),
        "bound": bound,
        "measured": rework,
        "c": c,
    }
    result = TrialResult(
        trial=trial_index, seed=trial_seed, model=cfg.model, strategy=cfg.study_mode,
        recovery="", fraction=None, ratio=None,
        failure_iteration=target_iter, rework_iters=rework, bound=bound,
        converged_iter=outcome.converged_iter, bytes_saved=0, bytes_restored=0,
        censored=censored)
    return result, point


def _study_hook(cfg: ExperimentConfig, solver: Solver, metric: NormMetric,
                rng: np.random.Generator, target_iter: int,
                initial: ParameterState) -> Callable:
    """Build the per-iteration perturbation for the configured study mode."""
    mode = cfg.study_mode

    def hook(state: ParameterState):
        k = state.iteration
        if mode == "bernoulli":
            if k >= 1 and rng.random() < cfg.bernoulli_p:
                seed = int(rng.integers(0, 2 ** 63))
                return inject_gaussian(state, cfg.study_scale, seed, metric)
            return state, None
        if k != target_iter:
            return state, None
        if mode == "gaussian":
            scale = cfg.study_scale * 10.0 ** rng.uniform(-2.0, 0.0)
            seed = int(rng.integers(0, 2 ** 63))
            return inject_gaussian(state, scale, seed, metric)
        if mode == "adversarial":
            magnitude = cfg.study_scale * 10.0 ** rng.uniform(-2.0, 0.0)
            return inject_adversarial(state, solver.analytic_optimum(), magnitude, metric)
        # reset: unit-granular, which for the single-unit qp model means all
        seed = int(rng.integers(0, 2 ** 63))
        perturbed, perturbation, _ = inject_reset(state, initial, 1.0, seed, metric)
        return perturbed, perturbation

    return hook


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(results: list[TrialResult], path: str | Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in results:
        lines.append(",".join(_format_cell(v) for v in r.row()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_summary(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True,
                                     allow_nan=True) + "\n", encoding="ascii")
