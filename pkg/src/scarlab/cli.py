"""Command-line entry point.

Subcommands mirror the experiment designs: `run` executes single trials of
one configuration, `sweep` the failure-fraction comparison, `ckpt-sweep`
the save-ratio strategy comparison, `bound-study` the perturbation-cost
scatter, and `verify` the recovery-perturbation Monte Carlo checks.

Exit codes: 0 success, 2 configuration error, 3 a required baseline never
converged.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import load_config
from .errors import ConfigError, NonConvergenceError, ScarlabError
from .params import NormMetric, state_from_arrays
from .checkpoint import FailureEvent, RunningCheckpoint, recover

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="flat key=value config file")
    parser.add_argument("--out", default="runs", help="output directory")
    parser.add_argument("--trials", type=int, default=None, help="override trial count")
    parser.add_argument("--seed", type=int, default=None, help="override base seed")
    parser.add_argument("--parallel", type=int, default=1,
                        help="worker processes for trial execution")


def _load(args) -> harness.ExperimentConfig:
    cfg = load_config(args.config)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    results = [harness.run_trial(cfg, i, run_dir=out) for i in range(cfg.trials)]
    harness.write_csv(results, out / f"{cfg.name}-run.csv")
    summary = {
        "experiment": cfg.name,
        "design": "run",
        "model": cfg.model,
        "trials": cfg.trials,
        "cells": harness.summarize_cells(results, ("strategy", "recovery")),
    }
    harness.write_summary(summary, out / f"{cfg.name}-run.json")
    print(f"wrote {out / (cfg.name + '-run.csv')}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    results, summary = harness.run_sweep(cfg, parallel=args.parallel)
    harness.write_csv(results, out / f"{cfg.name}-sweep.csv")
    harness.write_summary(summary, out / f"{cfg.name}-sweep.json")
    print(f"wrote {out / (cfg.name + '-sweep.csv')}")
    return EXIT_OK


def _cmd_ckpt_sweep(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    results, summary = harness.run_ckpt_sweep(cfg, parallel=args.parallel)
    harness.write_csv(results, out / f"{cfg.name}-ckpt-sweep.csv")
    harness.write_summary(summary, out / f"{cfg.name}-ckpt-sweep.json")
    print(f"wrote {out / (cfg.name + '-ckpt-sweep.csv')}")
    return EXIT_OK


def _cmd_bound_study(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    results, summary = harness.run_bound_study(cfg, parallel=args.parallel)
    harness.write_csv(results, out / f"{cfg.name}-bound-study.csv")
    harness.write_summary(summary, out / f"{cfg.name}-bound-study.json")
    print(f"wrote {out / (cfg.name + '-bound-study.csv')}; "
          f"violation rate {summary['violation_rate']:.4f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    """Monte Carlo checks of the two recovery-perturbation properties:
    partial recovery never increases the perturbation norm, and its expected
    squared norm scales with the lost fraction."""
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    metric = NormMetric(kind="euclidean")
    n_units, dim = 24, 4
    worst_excess = 0.0
    for _ in range(args.cases):
        live = {u: rng.standard_normal(dim) for u in range(n_units)}
        saved = {u: rng.standard_normal(dim) for u in range(n_units)}
        state = state_from_arrays(0, live, "mlr-row")
        ckpt = RunningCheckpoint()
        ckpt.append(saved, 0)
        count = int(rng.integers(1, n_units + 1))
        lost = tuple(sorted(int(u) for u in rng.choice(n_units, count, replace=False)))
        event = FailureEvent(iteration=1, lost_units=lost, fraction=count / n_units)
        _, partial, _ = recover(state, ckpt, event, "partial", metric)
        _, full, _ = recover(state, ckpt, event, "full", metric)
        worst_excess = max(worst_excess, partial.recorded_norm - full.recorded_norm)
    ok_monotone = worst_excess <= 1e-12
    print(f"partial-vs-full norm: {args.cases} cases, worst excess {worst_excess:.3e} "
          f"-> {'ok' if ok_monotone else 'VIOLATED'}")

    ok_scaling = True
    for fraction in (0.1, 0.25, 0.5, 0.75):
        live = {u: rng.standard_normal(dim) for u in range(100)}
        saved = {u: rng.standard_normal(dim) for u in range(100)}
        state = state_from_arrays(0, live, "mlr-row")
        ckpt = RunningCheckpoint()
        ckpt.append(saved, 0)
        count = int(round(fraction * 100))
        full_sq = None
        ratios = []
        for _ in range(args.samples):
            lost = tuple(sorted(int(u) for u in rng.choice(100, count, replace=False)))
            event = FailureEvent(iteration=1, lost_units=lost, fraction=fraction)
            _, partial, _ = recover(state, ckpt, event, "partial", metric)
            if full_sq is None:
                all_event = FailureEvent(iteration=1, lost_units=tuple(range(100)),
                                         fraction=1.0)
                _, full, _ = recover(state, ckpt, all_event, "full", metric)
                full_sq = full.recorded_norm ** 2
            ratios.append(partial.recorded_norm ** 2 / full_sq)
        mean = float(np.mean(ratios))
        rel_err = abs(mean - fraction) / fraction
        ok = rel_err < 0.02
        ok_scaling = ok_scaling and ok
        print(f"squared-norm scaling p={fraction}: mean ratio {mean:.4f} "
              f"(rel err {rel_err:.3%}) -> {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if (ok_monotone and ok_scaling) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scarlab",
                                     description="checkpoint-recovery simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, desc in (
        ("run", _cmd_run, "run single-configuration trials"),
        ("sweep", _cmd_sweep, "failure-fraction sweep, full vs partial recovery"),
        ("ckpt-sweep", _cmd_ckpt_sweep, "save-ratio and strategy sweep"),
        ("bound-study", _cmd_bound_study, "perturbation iteration-cost study"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        p.set_defaults(func=func)

    v = sub.add_parser("verify", help="Monte Carlo recovery-perturbation checks")
    v.add_argument("--cases", type=int, default=10000)
    v.add_argument("--samples", type=int, default=10000)
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"baseline did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ScarlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
