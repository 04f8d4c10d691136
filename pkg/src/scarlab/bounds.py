"""Iteration-cost calculators.

Given the contraction factor of an unperturbed run and a ledger of
perturbation norms, these functions compute iterations-to-tolerance counts,
the worst-case extra-iteration bound for a finite perturbation history, the
irreducible-error variant for perturbations in every iteration, and an
implicit bound for schedules with decaying step sizes.  measure_cost pairs
the calculators with observed traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (ArgumentError, EstimationError, NonConvergenceError,
                     SaturationError)
from .perturb import PerturbationLedger
from .solvers.base import ConvergenceCriterion

_MAX_SGD_K = 10 ** 9


@dataclass(frozen=True)
class ConvergenceProfile:
    """Linear-convergence certificate of an unperturbed run."""

    c: float                  # per-step contraction factor
    initial_distance: float   # distance from start to optimum
    epsilon: float            # target distance

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ArgumentError(f"contraction must be in (0, 1), got {self.c}")
        if self.initial_distance <= 0:
            raise ArgumentError("initial_distance must be positive")
        if self.epsilon <= 0:
            raise ArgumentError("epsilon must be positive")


@dataclass(frozen=True)
class CostReport:
    """Bound inputs and outcome for one perturbed run."""

    kappa_unperturbed: float
    delta_T: float
    bound: float
    measured_cost: int | None = None

    def __post_init__(self):
        if self.delta_T >= 0 and self.bound < 0:
            raise ArgumentError("bound cannot be negative for non-negative delta_T")


@dataclass(frozen=True)
class BoundedNoiseProfile:
    """Per-iteration norm cap for runs perturbed at every iteration."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ArgumentError("delta must be positive")


@dataclass(frozen=True)
class InfiniteBoundResult:
    floor: float
    iteration_bound: float   # +inf when the tolerance is unreachable
    cost_bound: float


@dataclass(frozen=True)
class SgdRateSchedule:
    """Decaying-rate family alpha_k = alpha0 / k with gradient-norm cap G."""

    alpha0: float
    gradient_bound: float

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise ArgumentError("alpha0 must be in (0, 1]")
        if self.gradient_bound < 0:
            raise ArgumentError("gradient_bound must be non-negative")

    @property
    def start_index(self) -> int:
        """Smallest k with alpha_k < 1."""
        return 2 if self.alpha0 == 1 else 1

    def alpha(self, k: int) -> float:
        if k < 1:
            raise ArgumentError("alpha_k is defined for k >= 1")
        return self.alpha0 / k

    def log_decay(self, k: int) -> float:
        """log of the running product of (1 - alpha_i) from start_index to k.

        Closed form via log-gamma, so the search below can probe k up to 1e9.
        """
        k0 = self.start_index
        if k < k0:
            return 0.0
        a = self.alpha0
        return (math.lgamma(k + 1 - a) - math.lgamma(k0 - a)
                - (math.lgamma(k + 1) - math.lgamma(k0)))


def estimate_c(trace: list[float] | np.ndarray) -> float:
    """Worst observed per-step contraction of a distance trace.

    The maximum step ratio (not a regression fit) keeps the resulting
    certificate valid for every step.  Traces are cut where they sink into
    rounding noise relative to the starting distance.
    """
    distances = np.asarray(trace, dtype=np.float64)
    if distances.ndim != 1 or distances.size < 3:
        raise ArgumentError("trace must hold at least 3 distances")
    if np.any(distances <= 0) or not np.all(np.isfinite(distances)):
        raise ArgumentError("trace distances must be positive and finite")
    cutoff = 10 * np.finfo(np.float64).eps * distances[0]
    below = np.nonzero(distances < cutoff)[0]
    if below.size:
        distances = distances[: below[0]]
    if distances.size < 3:
        raise EstimationError("trace too short after removing the rounding-noise tail")
    ratios = distances[1:] / distances[:-1]
    if float(np.mean(ratios >= 1.0)) >= 0.2:
        raise EstimationError(
            "trace does not contract persistently; linear-rate model does not apply")
    c = float(np.max(ratios))
    return float(min(max(c, np.finfo(np.float64).tiny), 1.0 - 1e-12))


def kappa(profile: ConvergenceProfile) -> float:
    """Iterations for the unperturbed run to be inside epsilon (may be
    negative when already there)."""
    return math.log(profile.initial_distance / profile.epsilon) / math.log(1.0 / profile.c)


def _require_contraction(ledger: PerturbationLedger) -> float:
    c = ledger.contraction
    if c is None or not 0 < c < 1:
        raise ArgumentError(f"ledger contraction must be in (0, 1), got {c}")
    return c


def delta_T(ledger: PerturbationLedger) -> float:
    """Discounted perturbation mass: sum of c**-k * norm_k over entries."""
    c = _require_contraction(ledger)
    return float(sum(c ** (-e.iteration) * e.recorded_norm for e in ledger.entries))


def _log_delta_T(ledger: PerturbationLedger) -> float:
    c = _require_contraction(ledger)
    terms = [-e.iteration * math.log(c) + math.log(e.recorded_norm)
             for e in ledger.entries if e.recorded_norm > 0]
    if not terms:
        return -math.inf
    return float(logsumexp(terms))


def cost_bound(profile: ConvergenceProfile, ledger: PerturbationLedger) -> float:
    """Worst-case extra iterations caused by the ledger's perturbations.

    Evaluated in log space so that old perturbations (whose discount factor
    c**-k overflows) still produce a finite bound.
    """
    log_dt = _log_delta_T(ledger)
    if log_dt == -math.inf:
        return 0.0
    log_ratio = log_dt - math.log(profile.initial_distance)
    return float(np.logaddexp(0.0, log_ratio) / math.log(1.0 / profile.c))


def perturbed_distance_envelope(c: float, initial_distance: float,
                                ledger: PerturbationLedger, iterations: int) -> np.ndarray:
    """Upper envelope of expected distance per iteration for a perturbed run.

    envelope[0] = initial distance; envelope[k+1] = c * (envelope[k] + norm
    injected at iteration k).  The closed form c**(k+1) * (D0 + sum of
    discounted norms) is this same recursion unrolled.
    """
    if not 0 < c < 1:
        raise ArgumentError("c must be in (0, 1)")
    if iterations < 0:
        raise ArgumentError("iterations must be non-negative")
    norms = {e.iteration: e.recorded_norm for e in ledger.entries}
    env = np.empty(iterations + 1)
    env[0] = initial_distance
    for k in range(iterations):
        env[k + 1] = c * (env[k] + norms.get(k, 0.0))
    return env


def infinite_bound(profile: ConvergenceProfile,
                   noise: BoundedNoiseProfile) -> InfiniteBoundResult:
    """Bounds when every iteration may be perturbed by up to noise.delta.

    There is an irreducible error floor of (c/(1-c)) * delta; tolerances at
    or below the floor are unreachable and reported as +inf rather than as
    errors.
    """
    c = profile.c
    floor = c / (1.0 - c) * noise.delta
    d0 = profile.initial_distance
    eps = profile.epsilon
    if eps <= floor or d0 <= floor:
        return InfiniteBoundResult(floor=floor, iteration_bound=math.inf,
                                   cost_bound=math.inf)
    log_inv_c = math.log(1.0 / c)
    iteration_bound = math.log((d0 - floor) / (eps - floor)) / log_inv_c
    cost = math.log((1.0 - floor / d0) / (1.0 - floor / eps)) / log_inv_c
    return InfiniteBoundResult(floor=floor, iteration_bound=iteration_bound,
                               cost_bound=cost)


def sgd_bound(schedule: SgdRateSchedule, ledger: PerturbationLedger,
              initial_distance: float, epsilon: float) -> int:
    """Smallest k whose squared-distance envelope falls below epsilon**2.

    The envelope is a_k * [D0**2 + sum over l of a_l**-1 * (norm_l**2 +
    alpha_l**2 G**2)], with a_k the running product of (1 - alpha_i) and the
    gradient-noise term accumulated at every iteration up to the last
    perturbation.  The formula is implicit in k, so the answer is found by
    doubling then bisection.
    """
    if initial_distance <= 0 or epsilon <= 0:
        raise ArgumentError("initial_distance and epsilon must be positive")
    bracket = initial_distance ** 2
    last = ledger.last_iteration()
    g2 = schedule.gradient_bound ** 2
    for k in range(1, last + 1):
        inv_a = math.exp(-schedule.log_decay(k))
        bracket += inv_a * schedule.alpha(k) ** 2 * g2
    for entry in ledger.entries:
        if entry.iteration == 0:
            bracket += entry.recorded_norm ** 2
        else:
            bracket += math.exp(-schedule.log_decay(entry.iteration)) * entry.recorded_norm ** 2

    target = 2.0 * math.log(epsilon)
    log_bracket = math.log(bracket)

    def satisfied(k: int) -> bool:
        return schedule.log_decay(k) + log_bracket < target

    lo = max(schedule.start_index, last + 1, 1)
    if satisfied(lo):
        return lo
    hi = lo
    while not satisfied(hi):
        hi *= 2
        if hi > _MAX_SGD_K:
            raise SaturationError(f"no k <= {_MAX_SGD_K} reaches epsilon {epsilon}")
    lo = hi // 2  # satisfied(lo) is False, satisfied(hi) is True
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return hi


def first_meeting(trace: list[float] | np.ndarray,
                  criterion: ConvergenceCriterion) -> int | None:
    """First iteration index at which the trace meets the criterion."""
    for k, value in enumerate(trace):
        if criterion.met(float(value)):
            return k
    return None


def measure_cost(baseline_trace, perturbed_trace,
                 criterion: ConvergenceCriterion) -> int:
    """Extra iterations the perturbed run needed to first meet the
    criterion, relative to the baseline.  Negative when the perturbation
    happened to help."""
    base = first_meeting(baseline_trace, criterion)
    if base is None:
        raise NonConvergenceError("baseline trace never meets the criterion",
                                  trace=list(baseline_trace))
    pert = first_meeting(perturbed_trace, criterion)
    if pert is None:
        raise NonConvergenceError("perturbed trace never meets the criterion",
                                  trace=list(perturbed_trace))
    return pert - base


def make_cost_report(profile: ConvergenceProfile, ledger: PerturbationLedger,
                     measured_cost: int | None = None) -> CostReport:
    return CostReport(
        kappa_unperturbed=kappa(profile),
        delta_T=delta_T(ledger),
        bound=cost_bound(profile, ledger),
        measured_cost=measured_cost,
    )
