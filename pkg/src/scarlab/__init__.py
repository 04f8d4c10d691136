"""scarlab: a simulation lab for self-correcting checkpoint recovery.

Iterative trainers tolerate perturbations to their parameters: training
simply takes extra iterations to wash them out.  This package simulates
that behavior end to end: reference trainers, perturbation injectors,
worst-case iteration-cost calculators, a running-checkpoint subsystem with
partial recovery and prioritized partial saves, and an experiment harness
that measures the rework cost of injected failures.
"""

from .bounds import (BoundedNoiseProfile, ConvergenceProfile, CostReport,
                     InfiniteBoundResult, SgdRateSchedule, cost_bound, delta_T,
                     estimate_c, infinite_bound, kappa, measure_cost, sgd_bound)
from .checkpoint import (CheckpointPolicy, FailureEvent, RunningCheckpoint, ShardStore,
                         inject_failure, inject_shard_failure, recover, replay_log,
                         save_checkpoint, select_for_checkpoint)
from .datagen import (ClassificationData, CorpusData, QuadraticData, RatingsData,
                      gen_classification, gen_corpus, gen_qp, gen_ratings, load_sparse)
from .errors import (ArgumentError, CheckpointLogError, ConfigError, DivergenceError,
                     EstimationError, NonConvergenceError, SaturationError, ScarlabError,
                     StructuralError)
from .harness import ExperimentConfig, TrialResult, run_bound_study, run_ckpt_sweep, \
    run_sweep, run_trial
from .params import (NormMetric, ParameterState, ParameterUnit, PartitionMap,
                     diff_norm, random_partition, restrict)
from .perturb import (Perturbation, PerturbationLedger, inject_adversarial,
                      inject_gaussian, inject_reset, inject_rounding)
from .solvers import (ConvergenceCriterion, Solver, SolverConfig, analytic_optimum,
                      loss, make_solver, rebuild_aux, step)

__version__ = "0.1.0"
