import numpy as np
import pytest

from scarlab import datagen
from scarlab.errors import ArgumentError, StructuralError


class TestGenQp:
    def test_condition_one_is_identity(self):
        data = datagen.gen_qp(4, 1.0, seed=0)
        np.testing.assert_array_equal(data.matrix, np.eye(4))

    def test_spectrum_matches_request(self):
        data = datagen.gen_qp(6, 50.0, seed=3)
        eigs = np.sort(np.linalg.eigvalsh(data.matrix))
        expected = np.logspace(0, np.log10(50.0), 6)
        np.testing.assert_allclose(eigs, expected, atol=1e-8)

    def test_cholesky_succeeds(self):
        data = datagen.gen_qp(8, 100.0, seed=5)
        np.linalg.cholesky(data.matrix)  # raises if not SPD

    def test_deterministic(self):
        a = datagen.gen_qp(4, 10.0, seed=9)
        b = datagen.gen_qp(4, 10.0, seed=9)
        np.testing.assert_array_equal(a.matrix, b.matrix)
        np.testing.assert_array_equal(a.rhs, b.rhs)

    def test_non_spd_rejected(self):
        with pytest.raises(StructuralError):
            datagen.QuadraticData(matrix=-np.eye(2), rhs=np.zeros(2))


class TestGenClassification:
    def test_exact_balance_when_divisible(self):
        data = datagen.gen_classification(100, 8, 4, seed=1)
        counts = np.bincount(data.labels, minlength=4)
        assert list(counts) == [25, 25, 25, 25]

    def test_deterministic(self):
        a = datagen.gen_classification(50, 6, 2, seed=4)
        b = datagen.gen_classification(50, 6, 2, seed=4)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_too_few_classes_rejected(self):
        with pytest.raises(ArgumentError):
            datagen.gen_classification(10, 4, 1, seed=0)


class TestGenRatings:
    def test_observed_count(self):
        data = datagen.gen_ratings(20, 30, 3, density=0.4, noise=0.0, seed=2)
        assert data.n_observed == round(0.4 * 20 * 30)

    def test_deterministic(self):
        a = datagen.gen_ratings(10, 10, 2, 0.5, 0.1, seed=7)
        b = datagen.gen_ratings(10, 10, 2, 0.5, 0.1, seed=7)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_indices_in_range(self):
        data = datagen.gen_ratings(15, 9, 2, 0.3, 0.0, seed=1)
        assert data.rows.max() < 15 and data.cols.max() < 9

    def test_bad_density_rejected(self):
        with pytest.raises(ArgumentError):
            datagen.gen_ratings(5, 5, 2, density=0.0, noise=0.0, seed=0)


class TestGenCorpus:
    def test_total_tokens_exact(self):
        data = datagen.gen_corpus(docs=30, vocab=50, topics=4, doc_len=20, seed=4)
        assert data.total_tokens == 30 * 20

    def test_token_ids_in_vocabulary(self):
        data = datagen.gen_corpus(docs=10, vocab=25, topics=3, doc_len=15, seed=5)
        for doc in data.docs:
            assert doc.min() >= 0 and doc.max() < 25

    def test_deterministic(self):
        a = datagen.gen_corpus(8, 30, 2, 10, seed=6)
        b = datagen.gen_corpus(8, 30, 2, 10, seed=6)
        for da, db in zip(a.docs, b.docs):
            np.testing.assert_array_equal(da, db)

    def test_lengths_vary_but_sum_exactly(self):
        data = datagen.gen_corpus(docs=40, vocab=30, topics=2, doc_len=24, seed=7)
        lengths = data.doc_lengths
        assert lengths.sum() == 40 * 24
        assert lengths.min() >= 1
        assert lengths.max() > lengths.min()  # not all equal


class TestSparseFiles:
    def test_round_trip(self, tmp_path):
        data = datagen.gen_classification(20, 6, 3, seed=8)
        path = tmp_path / "samples.txt"
        datagen.write_sparse(data, path)
        loaded = datagen.load_sparse(path, dim=6, n_classes=3)
        np.testing.assert_array_equal(loaded.features, data.features)
        np.testing.assert_array_equal(loaded.labels, data.labels)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        loaded = datagen.load_sparse(path, dim=4, n_classes=2)
        assert loaded.n_samples == 0

    def test_out_of_range_index_rejected_with_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0:1.0\n1 9:2.0\n")
        with pytest.raises(ArgumentError, match=":2:"):
            datagen.load_sparse(path, dim=4, n_classes=2)

    def test_malformed_entry_rejected_with_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0:1.0\n0 nonsense\n")
        with pytest.raises(ArgumentError, match=":2:"):
            datagen.load_sparse(path, dim=4, n_classes=2)


class TestRatingsFiles:
    def test_round_trip(self, tmp_path):
        data = datagen.gen_ratings(8, 9, 2, 0.5, 0.1, seed=3)
        path = tmp_path / "ratings.csv"
        datagen.write_ratings(data, path)
        loaded = datagen.load_ratings(path, rows=8, cols=9)
        np.testing.assert_array_equal(loaded.rows, data.rows)
        np.testing.assert_array_equal(loaded.cols, data.cols)
        np.testing.assert_array_equal(loaded.values, data.values)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n")
        with pytest.raises(ArgumentError, match=":1:"):
            datagen.load_ratings(path, rows=4, cols=4)


class TestCorpusFiles:
    def test_round_trip(self, tmp_path):
        data = datagen.gen_corpus(6, 20, 2, 12, seed=9)
        path = tmp_path / "corpus.txt"
        datagen.write_corpus(data, path)
        loaded = datagen.load_corpus(path, vocab_size=20)
        assert loaded.n_docs == data.n_docs
        for da, db in zip(loaded.docs, data.docs):
            np.testing.assert_array_equal(da, db)
