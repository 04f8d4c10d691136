import math

import numpy as np
import pytest

from scarlab import bounds as bnd
from scarlab import datagen
from scarlab.errors import (ArgumentError, EstimationError, NonConvergenceError,
                            SaturationError)
from scarlab.params import NormMetric, diff_norm, state_from_arrays
from scarlab.perturb import Perturbation, PerturbationLedger, inject_gaussian
from scarlab.solvers import ConvergenceCriterion, SolverConfig, make_solver

EUCLID = NormMetric(kind="euclidean")


def ledger_of(c, *entries):
    ledger = PerturbationLedger(contraction=c)
    for iteration, norm in entries:
        ledger.add(Perturbation(iteration, norm))
    return ledger


class TestEstimateC:
    def test_exact_geometric_trace(self):
        trace = [8.0 * 0.5 ** k for k in range(12)]
        assert bnd.estimate_c(trace) == pytest.approx(0.5, abs=1e-12)

    def test_qp_diag_two_eigenvalues(self):
        # A = diag(1, 2), step 0.5: per-direction factors 0.5 and 0, so the
        # worst observed step ratio converges to exactly 0.5
        data = datagen.QuadraticData(np.diag([1.0, 2.0]), np.zeros(2))
        cfg = SolverConfig(model="qp", max_iters=40, step_size=0.5, seed=1)
        solver = make_solver(cfg, data)
        opt = solver.analytic_optimum()
        state = solver.init_state()
        trace = [diff_norm(state, opt, EUCLID)]
        for _ in range(40):
            state = solver.step(state)
            trace.append(diff_norm(state, opt, EUCLID))
        assert bnd.estimate_c(trace) == pytest.approx(0.5, abs=1e-6)

    def test_constant_trace_rejected(self):
        with pytest.raises(EstimationError):
            bnd.estimate_c([3.0] * 10)

    def test_short_trace_rejected(self):
        with pytest.raises(ArgumentError):
            bnd.estimate_c([1.0, 0.5])

    def test_nonpositive_trace_rejected(self):
        with pytest.raises(ArgumentError):
            bnd.estimate_c([1.0, 0.0, 0.5])

    def test_rounding_noise_tail_is_cut(self):
        trace = [0.5 ** k for k in range(60)] + [1e-18, 3e-18, 0.5e-18, 2e-18]
        assert bnd.estimate_c(trace) == pytest.approx(0.5, abs=1e-9)


class TestKappa:
    def test_hand_example(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=8.0, epsilon=1.0)
        assert bnd.kappa(profile) == pytest.approx(3.0, abs=1e-12)

    def test_zero_when_already_at_tolerance(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=2.0, epsilon=2.0)
        assert bnd.kappa(profile) == 0.0

    def test_halving_epsilon_adds_fixed_iterations(self):
        for c in (0.3, 0.9):
            p1 = bnd.ConvergenceProfile(c=c, initial_distance=5.0, epsilon=0.1)
            p2 = bnd.ConvergenceProfile(c=c, initial_distance=5.0, epsilon=0.05)
            assert bnd.kappa(p2) - bnd.kappa(p1) == pytest.approx(
                math.log(2) / math.log(1 / c), rel=1e-12)

    def test_negative_when_inside_tolerance(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=1.0, epsilon=4.0)
        assert bnd.kappa(profile) < 0


class TestDeltaT:
    def test_empty_ledger_is_zero(self):
        assert bnd.delta_T(ledger_of(0.5)) == 0.0

    def test_hand_example(self):
        # c = 0.5: 0.5**0 * 1 + 0.5**-1 * 2 = 1 + 4 = 5
        assert bnd.delta_T(ledger_of(0.5, (0, 1.0), (1, 2.0))) == pytest.approx(5.0)

    def test_single_entry_at_zero_is_its_norm(self):
        for c in (0.1, 0.5, 0.9):
            assert bnd.delta_T(ledger_of(c, (0, 3.25))) == pytest.approx(3.25)

    def test_insertion_order_invariant(self):
        entries = [(7, 0.3), (2, 1.4), (11, 0.9), (5, 2.2)]
        forward = ledger_of(0.7, *entries)
        backward = ledger_of(0.7, *reversed(entries))
        assert bnd.delta_T(forward) == bnd.delta_T(backward)

    def test_contraction_required(self):
        with pytest.raises(ArgumentError):
            bnd.delta_T(ledger_of(1.5, (0, 1.0)))
        with pytest.raises(ArgumentError):
            bnd.delta_T(PerturbationLedger(entries=[Perturbation(0, 1.0)]))


class TestCostBound:
    def test_zero_mass_zero_bound(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=1.0, epsilon=0.1)
        assert bnd.cost_bound(profile, ledger_of(0.5)) == 0.0

    def test_hand_example(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=1.0, epsilon=0.1)
        assert bnd.cost_bound(profile, ledger_of(0.5, (0, 1.0))) == pytest.approx(1.0)

    def test_monotone_in_mass(self):
        rng = np.random.default_rng(0)
        profile = bnd.ConvergenceProfile(c=0.7, initial_distance=2.0, epsilon=0.1)
        prev = 0.0
        entries = []
        for k in range(1, 30):
            entries.append((k, float(rng.random()) + 0.01))
            bound = bnd.cost_bound(profile, ledger_of(0.7, *entries))
            assert bound > prev
            prev = bound

    def test_depends_on_iteration_only_through_discount(self):
        profile = bnd.ConvergenceProfile(c=0.8, initial_distance=3.0, epsilon=0.1)
        v, t = 0.37, 9
        via_entry = bnd.cost_bound(profile, ledger_of(0.8, (t, v)))
        direct = math.log1p(0.8 ** -t * v / 3.0) / math.log(1 / 0.8)
        assert via_entry == pytest.approx(direct, rel=1e-12)
        same_mass = bnd.cost_bound(profile, ledger_of(0.8, (0, 0.8 ** -t * v)))
        assert via_entry == pytest.approx(same_mass, rel=1e-12)

    def test_survives_discount_overflow(self):
        # c**-k overflows float64 for k ~ 2500 at c = 0.5; the log-domain
        # evaluation must still give a finite bound
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=1.0, epsilon=0.1)
        ledger = ledger_of(0.5, (5000, 1.0))
        assert bnd.delta_T(ledger) == math.inf
        bound = bnd.cost_bound(profile, ledger)
        assert math.isfinite(bound)
        assert bound == pytest.approx(5000.0, rel=1e-9)

    def test_pure_function_bitwise(self):
        profile = bnd.ConvergenceProfile(c=0.6, initial_distance=1.5, epsilon=0.2)
        ledger = ledger_of(0.6, (3, 0.7), (8, 0.2))
        assert bnd.cost_bound(profile, ledger) == bnd.cost_bound(profile, ledger)
        assert bnd.delta_T(ledger) == bnd.delta_T(ledger)
        assert bnd.kappa(profile) == bnd.kappa(profile)


class TestInfiniteBound:
    def test_floor_hand_example(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=10.0, epsilon=2.0)
        result = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=1.0))
        assert result.floor == pytest.approx(1.0)

    def test_epsilon_below_floor_unreachable(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=10.0, epsilon=0.5)
        result = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=1.0))
        assert result.iteration_bound == math.inf
        assert result.cost_bound == math.inf

    def test_vanishing_noise_recovers_zero_cost(self):
        profile = bnd.ConvergenceProfile(c=0.5, initial_distance=10.0, epsilon=1.0)
        for delta in (1e-3, 1e-6, 1e-9):
            result = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=delta))
            assert result.cost_bound < 0.01 or delta > 1e-4
        tiny = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=1e-12))
        assert tiny.cost_bound == pytest.approx(0.0, abs=1e-9)

    def test_iteration_bound_formula(self):
        c, d0, eps, delta = 0.6, 12.0, 0.9, 0.2
        profile = bnd.ConvergenceProfile(c=c, initial_distance=d0, epsilon=eps)
        result = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=delta))
        floor = c / (1 - c) * delta
        expected = math.log((d0 - floor) / (eps - floor)) / math.log(1 / c)
        assert result.iteration_bound == pytest.approx(expected, rel=1e-12)

    def test_random_profiles_flag_unreachable_tolerances(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            c = float(rng.uniform(0.05, 0.95))
            delta = float(rng.uniform(0.01, 2.0))
            d0 = float(rng.uniform(0.1, 20.0))
            eps = float(rng.uniform(0.001, 5.0))
            profile = bnd.ConvergenceProfile(c=c, initial_distance=d0, epsilon=eps)
            result = bnd.infinite_bound(profile, bnd.BoundedNoiseProfile(delta=delta))
            floor = c / (1 - c) * delta
            assert result.floor == pytest.approx(floor, rel=1e-12)
            if eps <= floor or d0 <= floor:
                assert result.iteration_bound == math.inf
            else:
                assert math.isfinite(result.iteration_bound)


class TestSgdBound:
    def test_alpha0_one_closed_form(self):
        # alpha0 = 1 telescopes to a_k = 1/k: the bound solves (1/k) D^2 < eps^2
        schedule = bnd.SgdRateSchedule(alpha0=1.0, gradient_bound=0.0)
        for k in (2, 5, 20, 100):
            assert math.exp(schedule.log_decay(k)) == pytest.approx(1.0 / k, rel=1e-12)
        d0, eps = 4.0, 0.25
        k = bnd.sgd_bound(schedule, PerturbationLedger(), d0, eps)
        target = d0 ** 2 / eps ** 2
        assert abs(k - target) <= 1.0
        assert math.exp(schedule.log_decay(k)) * d0 ** 2 < eps ** 2
        assert math.exp(schedule.log_decay(k - 1)) * d0 ** 2 >= eps ** 2

    def test_log_decay_matches_running_product(self):
        for alpha0 in (0.3, 0.75, 1.0):
            schedule = bnd.SgdRateSchedule(alpha0=alpha0, gradient_bound=1.0)
            product = 1.0
            for k in range(schedule.start_index, 200):
                product *= 1.0 - alpha0 / k
                assert schedule.log_decay(k) == pytest.approx(math.log(product),
                                                              rel=1e-10)

    def test_perturbations_never_reduce_the_bound(self):
        schedule = bnd.SgdRateSchedule(alpha0=0.8, gradient_bound=0.5)
        base = bnd.sgd_bound(schedule, PerturbationLedger(), 3.0, 0.2)
        ledger = PerturbationLedger()
        prev = base
        for k, norm in ((2, 0.5), (6, 1.0), (9, 0.1)):
            ledger.add(Perturbation(k, norm))
            k_new = bnd.sgd_bound(schedule, ledger, 3.0, 0.2)
            assert k_new >= prev
            prev = k_new

    def test_unreachable_tolerance_saturates(self):
        # gradient noise forbids eps below the noise floor; the search caps out
        schedule = bnd.SgdRateSchedule(alpha0=1.0, gradient_bound=10.0)
        ledger = ledger_of(None)
        ledger.add(Perturbation(1, 5.0))
        with pytest.raises(SaturationError):
            bnd.sgd_bound(schedule, ledger, 3.0, 1e-9)

    def test_validation(self):
        with pytest.raises(ArgumentError):
            bnd.SgdRateSchedule(alpha0=0.0, gradient_bound=1.0)
        with pytest.raises(ArgumentError):
            bnd.SgdRateSchedule(alpha0=1.2, gradient_bound=1.0)


class TestMeasureCost:
    CRIT = ConvergenceCriterion(metric="loss", threshold=1.0)

    def test_identical_traces_cost_zero(self):
        trace = [5.0, 3.0, 0.5]
        assert bnd.measure_cost(trace, trace, self.CRIT) == 0

    def test_subtraction_contract(self):
        baseline = [2.0] * 100 + [0.5]
        perturbed = [2.0] * 117 + [0.5]
        assert bnd.measure_cost(baseline, perturbed, self.CRIT) == 17

    def test_negative_cost_allowed(self):
        baseline = [2.0] * 10 + [0.5]
        perturbed = [2.0] * 4 + [0.5]
        assert bnd.measure_cost(baseline, perturbed, self.CRIT) == -6

    def test_non_convergent_baseline_raises_with_trace(self):
        with pytest.raises(NonConvergenceError) as info:
            bnd.measure_cost([2.0, 2.0], [0.5], self.CRIT)
        assert info.value.trace == [2.0, 2.0]

    def test_non_convergent_perturbed_raises(self):
        with pytest.raises(NonConvergenceError):
            bnd.measure_cost([0.5], [2.0, 2.0], self.CRIT)


class TestDistanceEnvelope:
    def test_matches_closed_form(self):
        c, d0 = 0.7, 5.0
        ledger = ledger_of(c, (2, 1.0), (5, 0.25))
        env = bnd.perturbed_distance_envelope(c, d0, ledger, 10)
        norms = {2: 1.0, 5: 0.25}
        for k in range(1, 11):
            mass = sum(c ** -l * v for l, v in norms.items() if l < k)
            assert env[k] == pytest.approx(c ** k * (d0 + mass), rel=1e-12)

    def test_perturbed_qp_runs_stay_under_envelope(self):
        # the envelope bounds the mean distance of perturbed runs; for fixed
        # perturbation norms it even holds per path
        data = datagen.gen_qp(4, 10.0, seed=3)
        cfg = SolverConfig(model="qp", max_iters=60, step_size=0.05, seed=0)
        solver = make_solver(cfg, data)
        c = solver.contraction_factor()
        opt = solver.analytic_optimum()
        schedule = {5: 0.8, 12: 0.4, 20: 1.5}
        per_seed = []
        d0 = None
        for seed in range(200):
            solver = make_solver(
                SolverConfig(model="qp", max_iters=60, step_size=0.05, seed=0), data)
            state = solver.init_state()
            d0 = diff_norm(state, opt, EUCLID)
            distances = [d0]
            rng = np.random.default_rng(seed)
            for k in range(40):
                if k in schedule:
                    direction = rng.standard_normal(4)
                    direction *= schedule[k] / np.linalg.norm(direction)
                    state = state.with_units({0: state.values_of(0) + direction})
                state = solver.step(state)
                distances.append(diff_norm(state, opt, EUCLID))
            per_seed.append(distances)
        mean_distances = np.mean(per_seed, axis=0)
        ledger = ledger_of(c, *schedule.items())
        env = bnd.perturbed_distance_envelope(c, d0, ledger, 40)
        assert np.all(mean_distances <= env * 1.05 + 1e-12)
