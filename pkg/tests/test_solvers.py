import numpy as np
import pytest

from scarlab import datagen
from scarlab.errors import ArgumentError, DivergenceError, StructuralError
from scarlab.params import NormMetric, diff_norm, state_from_arrays
from scarlab.solvers import (SolverConfig, analytic_optimum, loss, make_solver,
                             rebuild_aux, step)

EUCLID = NormMetric(kind="euclidean")


def qp_state(values):
    return state_from_arrays(0, {0: np.asarray(values, dtype=float)}, "qp-all")


class TestQp:
    def test_identity_one_step_contraction(self):
        data = datagen.QuadraticData(np.eye(3), np.zeros(3))
        cfg = SolverConfig(model="qp", max_iters=10, step_size=1.0)
        nxt = step(qp_state([5.0, -2.0, 9.0]), cfg, data)
        np.testing.assert_array_equal(nxt.values_of(0), np.zeros(3))

    def test_hand_computed_step(self):
        data = datagen.QuadraticData(np.diag([1.0, 2.0]), np.zeros(2))
        cfg = SolverConfig(model="qp", max_iters=10, step_size=0.5)
        nxt = step(qp_state([1.0, 1.0]), cfg, data)
        np.testing.assert_allclose(nxt.values_of(0), [0.5, 0.0], atol=1e-15)

    def test_loss_minimum_value(self):
        data = datagen.gen_qp(5, 10.0, seed=0)
        cfg = SolverConfig(model="qp", max_iters=10, step_size=0.1)
        opt = analytic_optimum(cfg, data)
        expected = -0.5 * data.rhs @ np.linalg.solve(data.matrix, data.rhs)
        assert loss(opt, cfg, data) == pytest.approx(expected, rel=1e-12)

    def test_optimum_examples(self):
        data = datagen.QuadraticData(np.eye(4), np.array([1.0, 2.0, 3.0, 4.0]))
        cfg = SolverConfig(model="qp", max_iters=10)
        np.testing.assert_allclose(analytic_optimum(cfg, data).values_of(0),
                                   [1.0, 2.0, 3.0, 4.0])
        data = datagen.QuadraticData(np.diag([1.0, 2.0]), np.array([2.0, 2.0]))
        np.testing.assert_allclose(analytic_optimum(cfg, data).values_of(0), [2.0, 1.0])

    def test_optimum_residual_random_spd(self):
        for seed in range(5):
            data = datagen.gen_qp(6, 30.0, seed=seed)
            cfg = SolverConfig(model="qp", max_iters=10)
            x_star = analytic_optimum(cfg, data).values_of(0)
            assert np.linalg.norm(data.matrix @ x_star - data.rhs) < 1e-10

    def test_per_step_contraction_never_exceeds_rate(self):
        data = datagen.gen_qp(4, 10.0, seed=2)
        cfg = SolverConfig(model="qp", max_iters=100, step_size=0.05, seed=3)
        solver = make_solver(cfg, data)
        c = solver.contraction_factor()
        opt = solver.analytic_optimum()
        state = solver.init_state()
        for _ in range(100):
            nxt = solver.step(state)
            before = diff_norm(state, opt, EUCLID)
            after = diff_norm(nxt, opt, EUCLID)
            assert after <= c * before + 1e-9
            state = nxt

    def test_divergent_step_size_raises(self):
        data = datagen.gen_qp(4, 10.0, seed=2)
        cfg = SolverConfig(model="qp", max_iters=4000, step_size=10.0, seed=3)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        with pytest.raises(DivergenceError):
            for _ in range(4000):
                state = solver.step(state)


class TestMlr:
    def make(self, seed=0):
        data = datagen.gen_classification(120, 8, 3, seed=11)
        cfg = SolverConfig(model="mlr", max_iters=300, step_size=0.01,
                           batch_size=16, seed=seed)
        return make_solver(cfg, data), data

    def test_zero_weights_cross_entropy(self):
        solver, data = self.make()
        state = solver.init_state()
        assert solver.loss(state) == pytest.approx(120 * np.log(3), rel=1e-12)

    def test_reaches_high_accuracy(self):
        data = datagen.gen_classification(200, 10, 2, seed=12)
        cfg = SolverConfig(model="mlr", max_iters=200, step_size=0.01,
                           batch_size=32, seed=1)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        for _ in range(200):
            state = solver.step(state)
        assert solver.accuracy(state) > 0.95

    def test_bitwise_deterministic(self):
        solver_a, _ = self.make(seed=5)
        solver_b, _ = self.make(seed=5)
        state_a, state_b = solver_a.init_state(), solver_b.init_state()
        for _ in range(10):
            state_a = solver_a.step(state_a)
            state_b = solver_b.step(state_b)
        for u in state_a.unit_ids():
            np.testing.assert_array_equal(state_a.values_of(u), state_b.values_of(u))
        assert solver_a.loss(state_a) == solver_b.loss(state_b)

    def test_minibatches_cover_epoch_without_replacement(self):
        solver, data = self.make(seed=9)
        seen = np.concatenate([solver._batch_indices(k)
                               for k in range(solver.batches_per_epoch)])
        assert sorted(seen) == list(range(data.n_samples))


class TestMf:
    def test_zero_factor_loss_is_sum_of_squares(self):
        data = datagen.gen_ratings(12, 10, 2, 0.5, 0.1, seed=3)
        cfg = SolverConfig(model="mf", max_iters=10, factors=2, seed=0)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        zeroed = state.with_units({u: np.zeros(2) for u in state.unit_ids()})
        assert solver.loss(zeroed) == pytest.approx(float(data.values @ data.values),
                                                    rel=1e-12)

    def test_loss_non_increasing_per_sweep(self):
        data = datagen.gen_ratings(20, 18, 3, 0.4, 0.2, seed=4)
        cfg = SolverConfig(model="mf", max_iters=30, factors=3, seed=1)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        prev = solver.loss(state)
        for _ in range(30):
            state = solver.step(state)
            cur = solver.loss(state)
            assert cur <= prev + 1e-9
            prev = cur

    def test_exact_factorization_recovered(self):
        # noiseless complete planted matrix at the true rank
        data = datagen.gen_ratings(15, 12, 3, density=1.0, noise=0.0, seed=5)
        cfg = SolverConfig(model="mf", max_iters=60, factors=3, seed=2)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        for _ in range(60):
            state = solver.step(state)
        assert solver.loss(state) < 1e-6 * data.n_observed

    def test_deterministic(self):
        data = datagen.gen_ratings(10, 10, 2, 0.6, 0.1, seed=6)
        cfg = SolverConfig(model="mf", max_iters=10, factors=2, seed=7)
        a = make_solver(cfg, data)
        b = make_solver(cfg, data)
        sa, sb = a.init_state(), b.init_state()
        for _ in range(5):
            sa, sb = a.step(sa), b.step(sb)
        for u in sa.unit_ids():
            np.testing.assert_array_equal(sa.values_of(u), sb.values_of(u))


class TestLda:
    def make(self, seed=0, docs=20, vocab=40, topics=4, doc_len=15):
        data = datagen.gen_corpus(docs, vocab, topics, doc_len, seed=21)
        cfg = SolverConfig(model="lda", max_iters=50, topics=topics, seed=seed)
        return make_solver(cfg, data), data

    def test_token_counts_conserved_by_sweep(self):
        solver, data = self.make()
        state = solver.init_state()
        for _ in range(3):
            state = solver.step(state)
            aux = state.aux
            assert aux.doc_topic.sum() == data.total_tokens
            assert aux.word_topic.sum() == data.total_tokens
            assert aux.topic_totals.sum() == data.total_tokens

    def test_doc_distributions_sum_to_one(self):
        solver, _ = self.make()
        state = solver.step(solver.init_state())
        for u in state.unit_ids():
            assert state.values_of(u).sum() == pytest.approx(1.0, abs=1e-12)

    def test_rebuild_is_idempotent(self):
        solver, _ = self.make()
        state = solver.step(solver.init_state())
        rebuilt = solver.rebuild_aux(state)
        np.testing.assert_array_equal(rebuilt.aux.doc_topic, state.aux.doc_topic)
        np.testing.assert_array_equal(rebuilt.aux.word_topic, state.aux.word_topic)
        for u in state.unit_ids():
            np.testing.assert_array_equal(rebuilt.values_of(u), state.values_of(u))

    def test_single_doc_single_topic_counts(self):
        data = datagen.CorpusData(docs=[np.array([0, 1, 2, 1], dtype=np.int32)],
                                  vocab_size=3)
        cfg = SolverConfig(model="lda", max_iters=5, topics=2, seed=0)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        forced = solver.restore_payloads(state, {0: np.zeros(4, dtype=np.uint32)})
        aux = forced.aux
        assert aux.doc_topic[0, 0] == 4 and aux.doc_topic[0, 1] == 0
        assert aux.word_topic[0].sum() == 4 and aux.word_topic[1].sum() == 0

    def test_subset_restore_matches_recount_oracle(self):
        solver, data = self.make()
        early = solver.step(solver.init_state())
        late = early
        for _ in range(5):
            late = solver.step(late)
        # restore half the documents' assignments from the early state
        payloads = {u: solver.checkpoint_payload(early, u) for u in range(0, 10)}
        mixed = solver.restore_payloads(late, payloads)
        # oracle: recount tables from the mixed flat assignments directly
        z = mixed.aux.z
        doc_of_token = solver.doc_of_token
        words = solver.words
        k = solver.topics
        doc_topic = np.zeros((data.n_docs, k), dtype=np.int64)
        word_topic = np.zeros((k, data.vocab_size), dtype=np.int64)
        for pos in range(z.size):
            doc_topic[doc_of_token[pos], z[pos]] += 1
            word_topic[z[pos], words[pos]] += 1
        np.testing.assert_array_equal(mixed.aux.doc_topic, doc_topic)
        np.testing.assert_array_equal(mixed.aux.word_topic, word_topic)

    def test_single_topic_likelihood_matches_closed_form(self):
        # with one effective topic the token likelihood has a closed form:
        # p(w) = (count(w) + beta) / (total + V beta)
        data = datagen.gen_corpus(docs=12, vocab=30, topics=1, doc_len=20, seed=31)
        cfg = SolverConfig(model="lda", max_iters=5, topics=2, seed=0)
        solver = make_solver(cfg, data)
        state = solver.init_state()
        # force every token into topic 0 to emulate a single-topic model
        payloads = {u: np.zeros(int(solver.lengths[u]), dtype=np.uint32)
                    for u in state.unit_ids()}
        state = solver.restore_payloads(state, payloads)
        counts = np.bincount(solver.words, minlength=30)
        total = solver.words.size
        phi = (counts + 1.0) / (total + 30.0)
        theta0 = (solver.lengths + 1.0) / (solver.lengths + 2.0)  # smoothed doc share
        theta1 = 1.0 / (solver.lengths + 2.0)
        uniform = 1.0 / 30.0  # empty topic's smoothed word distribution
        per_token = (theta0[solver.doc_of_token] * phi[solver.words]
                     + theta1[solver.doc_of_token] * uniform)
        expected = float(-np.log(per_token).sum())
        assert solver.loss(state) == pytest.approx(expected, rel=1e-9)

    def test_bitwise_deterministic(self):
        a, _ = self.make(seed=3)
        b, _ = self.make(seed=3)
        sa, sb = a.init_state(), b.init_state()
        for _ in range(5):
            sa, sb = a.step(sa), b.step(sb)
        np.testing.assert_array_equal(sa.aux.z, sb.aux.z)
        assert a.loss(sa) == b.loss(sb)

    def test_rebuild_requires_assignments(self):
        solver, _ = self.make()
        state = solver.init_state()
        bare = state_from_arrays(0, {u: state.values_of(u) for u in state.unit_ids()},
                                 "lda-doc")
        with pytest.raises(StructuralError):
            solver.rebuild_aux(bare)


class TestDispatch:
    def test_model_data_mismatch_rejected(self):
        data = datagen.gen_qp(4, 10.0, seed=0)
        cfg = SolverConfig(model="mlr", max_iters=10)
        with pytest.raises(ArgumentError):
            make_solver(cfg, data)

    def test_rebuild_aux_rejects_non_lda(self):
        data = datagen.gen_qp(4, 10.0, seed=0)
        cfg = SolverConfig(model="qp", max_iters=10)
        state = make_solver(cfg, data).init_state()
        with pytest.raises(ArgumentError):
            rebuild_aux(state, cfg, data)

    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            SolverConfig(model="qp", max_iters=0)
        with pytest.raises(ArgumentError):
            SolverConfig(model="qp", max_iters=10, step_size=-1.0)
        with pytest.raises(ArgumentError):
            SolverConfig(model="lda", max_iters=10, topics=1)
