"""Named experiment presets at desk scale.

Each preset pairs a synthetic dataset with solver settings and a
convergence threshold calibrated so baselines converge reliably in tens of
iterations, leaving room for failures to strike mid-run.
"""

from __future__ import annotations

from .errors import ConfigError
from .harness import ExperimentConfig, make_dataset_spec
from .solvers import SolverConfig


def qp_bound_study() -> ExperimentConfig:
    """4-D quadratic, condition number 10, for the perturbation-cost study.

    The small step keeps the contraction factor near one so that measured
    costs resolve to whole iterations well inside the bound; the warmup
    makes the starting error live in the slow eigenspace, where the
    linear-rate certificate is tight.
    """
    return ExperimentConfig(
        name="qp-bound",
        model="qp",
        dataset=make_dataset_spec("qp", dim=4, condition_number=10.0, seed=20240101),
        solver=SolverConfig(model="qp", max_iters=1200, step_size=0.015),
        criterion_metric="distance",
        criterion_threshold=1e-4,
        metric_kind="euclidean",
        trials=1000,
        base_seed=101,
        bounds_enabled=True,
        study_mode="gaussian",
        study_scale=1.0,
        study_iteration=None,
        warmup_iters=220,
        fraction=None,
    )


def qp_recovery() -> ExperimentConfig:
    """Quadratic with checkpoint recovery, for deterministic-replay checks."""
    return ExperimentConfig(
        name="qp-recovery",
        model="qp",
        dataset=make_dataset_spec("qp", dim=16, condition_number=10.0, seed=20240102),
        solver=SolverConfig(model="qp", max_iters=400, step_size=0.05),
        criterion_metric="distance",
        criterion_threshold=1e-6,
        metric_kind="euclidean",
        trials=20,
        base_seed=202,
        ckpt_interval=16,
        fraction=1.0,
        recovery="full",
        bounds_enabled=True,
    )


def mlr_sweep() -> ExperimentConfig:
    """Synthetic Gaussian-cluster classification trained by minibatch SGD.

    Baselines cross the loss threshold at roughly iteration 70 of 200.
    """
    return ExperimentConfig(
        name="mlr-sweep",
        model="mlr",
        dataset=make_dataset_spec("classification", samples=512, dim=64, classes=5,
                                  seed=20240103, separation=3.0, feature_decay=0.6),
        solver=SolverConfig(model="mlr", max_iters=200, step_size=0.004, batch_size=64),
        criterion_metric="loss",
        criterion_threshold=7.0,
        metric_kind="euclidean",
        trials=100,
        base_seed=303,
        ckpt_interval=16,
        geom_p=1.0 / 25.0,
        fraction=0.5,
    )


def mf_sweep() -> ExperimentConfig:
    """Planted low-rank ratings trained by alternating least squares.

    The planted spectrum decays geometrically and the fit rank truncates it
    mid-tail, giving a unique loss floor (identical across inits) reached
    through a gradual tail; baselines cross the threshold at roughly
    iteration 8 to 25.  Failures are offset past the burn-in sweeps so they
    land in the tail phase that checkpoint staleness actually affects.
    """
    return ExperimentConfig(
        name="mf-sweep",
        model="mf",
        dataset=make_dataset_spec("ratings", rows=64, cols=64, rank=24, density=0.6,
                                  noise=0.05, seed=20240104, factor_decay=0.96),
        solver=SolverConfig(model="mf", max_iters=120, factors=10),
        criterion_metric="loss",
        criterion_threshold=11.56,
        metric_kind="euclidean",
        trials=100,
        base_seed=404,
        ckpt_interval=16,
        geom_p=1.0 / 8.0,
        failure_offset=8,
        fraction=0.5,
    )


def lda_sweep() -> ExperimentConfig:
    """Planted topic model trained by collapsed Gibbs sampling.

    Baselines cross the likelihood threshold at roughly iteration 20 to 45.
    """
    return ExperimentConfig(
        name="lda-sweep",
        model="lda",
        dataset=make_dataset_spec("corpus", docs=96, vocab=160, topics=8, doc_len=48,
                                  seed=20240105),
        solver=SolverConfig(model="lda", max_iters=160, topics=8,
                            dirichlet_alpha=1.0, dirichlet_beta=1.0),
        criterion_metric="loss",
        criterion_threshold=20350.0,
        metric_kind="scaled_tv",
        trials=100,
        base_seed=505,
        ckpt_interval=16,
        geom_p=1.0 / 10.0,
        failure_offset=6,
        fraction=0.5,
    )


PRESETS = {
    "qp-bound": qp_bound_study,
    "qp-recovery": qp_recovery,
    "mlr-sweep": mlr_sweep,
    "mf-sweep": mf_sweep,
    "lda-sweep": lda_sweep,
}

DEFAULT_PRESET_BY_MODEL = {
    "qp": "qp-recovery",
    "mlr": "mlr-sweep",
    "mf": "mf-sweep",
    "lda": "lda-sweep",
}


def load_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
