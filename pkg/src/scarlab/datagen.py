"""Synthetic dataset generators and small text-file loaders.

Generators are pure functions of their arguments (including the seed), so
datasets are bitwise reproducible.  Sizes are desk scale: large enough to
show the qualitative convergence behavior of each trainer, small enough
that hundred-trial sweeps run in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, StructuralError


@dataclass
class QuadraticData:
    """Strictly convex quadratic objective 0.5 x'Ax - b'x."""

    matrix: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        b = np.asarray(self.rhs, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise StructuralError("matrix must be square")
        if b.shape != (a.shape[0],):
            raise StructuralError("rhs length must match matrix size")
        if not np.allclose(a, a.T, atol=1e-10):
            raise StructuralError("matrix must be symmetric")
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise StructuralError("matrix must be positive definite") from None
        self.matrix = a
        self.rhs = b

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ClassificationData:
    """Dense labeled samples for the multinomial logistic trainer."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise StructuralError("features must be (n, d) with one label per row")
        if self.n_classes < 2:
            raise ArgumentError("n_classes must be >= 2")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise StructuralError("labels out of range")
        self.features = x
        self.labels = y

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class RatingsData:
    """Observed (row, col, value) triples of a partially observed matrix."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=np.int64)
        c = np.asarray(self.cols, dtype=np.int64)
        v = np.asarray(self.values, dtype=np.float64)
        if not (r.shape == c.shape == v.shape) or r.ndim != 1:
            raise StructuralError("rows, cols, values must be equal-length 1-D arrays")
        if r.size and (r.min() < 0 or r.max() >= self.n_rows):
            raise StructuralError("row index out of range")
        if c.size and (c.min() < 0 or c.max() >= self.n_cols):
            raise StructuralError("col index out of range")
        self.rows, self.cols, self.values = r, c, v

    @property
    def n_observed(self) -> int:
        return self.values.shape[0]


@dataclass
class CorpusData:
    """Bag-of-words documents as arrays of token word ids."""

    docs: list[np.ndarray]
    vocab_size: int

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ArgumentError("vocab_size must be >= 1")
        docs = []
        for i, doc in enumerate(self.docs):
            arr = np.asarray(doc, dtype=np.int32)
            if arr.ndim != 1 or arr.size == 0:
                raise StructuralError(f"document {i} must be a non-empty 1-D array")
            if arr.min() < 0 or arr.max() >= self.vocab_size:
                raise StructuralError(f"document {i} has token ids outside the vocabulary")
            docs.append(arr)
        self.docs = docs

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.array([d.size for d in self.docs], dtype=np.int64)

    @property
    def total_tokens(self) -> int:
        return int(self.doc_lengths.sum())


Dataset = QuadraticData | ClassificationData | RatingsData | CorpusData


def gen_qp(dim: int, condition_number: float, seed: int) -> QuadraticData:
    """Random SPD quadratic with eigenvalues log-spaced in [1, condition_number].

    condition_number == 1 emits the identity matrix exactly.
    """
    if dim < 1:
        raise ArgumentError("dim must be >= 1")
    if condition_number < 1:
        raise ArgumentError("condition_number must be >= 1")
    rng = np.random.default_rng(seed)
    if condition_number == 1 or dim == 1:
        a = np.eye(dim)
    else:
        eigs = np.logspace(0.0, np.log10(condition_number), dim)
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity
        a = (q * eigs) @ q.T
        a = (a + a.T) / 2.0
    b = rng.standard_normal(dim)
    return QuadraticData(matrix=a, rhs=b)


def gen_classification(samples: int, dim: int, classes: int, seed: int,
                       separation: float = 4.0, feature_decay: float = 0.5) -> ClassificationData:
    """Gaussian class clusters with geometrically decaying feature scales.

    The decay gives features (and hence weight-matrix rows) unequal
    influence, which is what makes drift-based checkpoint prioritization
    meaningful on this data.
    """
    if classes < 2:
        raise ArgumentError("classes must be >= 2")
    if samples < classes:
        raise ArgumentError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    scales = (1.0 + np.arange(dim)) ** (-feature_decay)
    means = rng.standard_normal((classes, dim)) * separation
    labels = np.arange(samples, dtype=np.int64) % classes
    features = (means[labels] + rng.standard_normal((samples, dim))) * scales
    return ClassificationData(features=features, labels=labels, n_classes=classes)


def gen_ratings(rows: int, cols: int, rank: int, density: float, noise: float,
                seed: int, factor_decay: float = 1.0) -> RatingsData:
    """Planted low-rank ratings: observed entries of L0 R0 plus noise.

    factor_decay < 1 scales planted factor component j by factor_decay**j,
    giving the product a smoothly decaying spectrum; fitting a rank in the
    middle of such a spectrum makes the alternating solver converge slowly
    instead of snapping to the answer in a few sweeps.
    """
    if rows < 1 or cols < 1 or rank < 1:
        raise ArgumentError("rows, cols, rank must be >= 1")
    if not 0 < density <= 1:
        raise ArgumentError("density must be in (0, 1]")
    if not 0 < factor_decay <= 1:
        raise ArgumentError("factor_decay must be in (0, 1]")
    rng = np.random.default_rng(seed)
    scales = factor_decay ** np.arange(rank)
    l0 = rng.random((rows, rank)) * scales
    r0 = rng.random((rank, cols)) * scales[:, None]
    count = int(round(density * rows * cols))
    count = max(1, count)
    flat = np.sort(rng.choice(rows * cols, size=count, replace=False))
    r_idx, c_idx = np.divmod(flat, cols)
    values = np.einsum("ij,ji->i", l0[r_idx], r0[:, c_idx])
    if noise > 0:
        values = values + noise * rng.standard_normal(count)
    return RatingsData(n_rows=rows, n_cols=cols, rows=r_idx, cols=c_idx, values=values)


def gen_corpus(docs: int, vocab: int, topics: int, doc_len: int, seed: int) -> CorpusData:
    """Documents sampled from a planted topic model.

    Document lengths vary around doc_len but always sum to exactly
    docs * doc_len.  Varying lengths give units unequal norm weights, which
    exercises length-scaled prioritization.
    """
    if docs < 1 or vocab < 2 or topics < 1 or doc_len < 1:
        raise ArgumentError("docs, topics, doc_len must be >= 1 and vocab >= 2")
    rng = np.random.default_rng(seed)
    lengths = rng.integers(max(1, doc_len - doc_len // 2), doc_len + doc_len // 2 + 1,
                           size=docs)
    # Adjust to the exact total while keeping every length >= 1.
    total_target = docs * doc_len
    diff = total_target - int(lengths.sum())
    i = 0
    while diff != 0:
        step = 1 if diff > 0 else -1
        if lengths[i % docs] + step >= 1:
            lengths[i % docs] += step
            diff -= step
        i += 1
    topic_word = rng.dirichlet(np.full(vocab, 0.1), size=topics)
    topic_word_cum = np.cumsum(topic_word, axis=1)
    doc_topic = rng.dirichlet(np.full(topics, 0.5), size=docs)
    documents = []
    for d in range(docs):
        n = int(lengths[d])
        z = rng.choice(topics, size=n, p=doc_topic[d])
        u = rng.random(n)
        words = np.empty(n, dtype=np.int32)
        for t in range(topics):
            mask = z == t
            if mask.any():
                words[mask] = np.searchsorted(topic_word_cum[t], u[mask])
        documents.append(np.minimum(words, vocab - 1))
    return CorpusData(docs=documents, vocab_size=vocab)


# ---------------------------------------------------------------------------
# Text-file formats: sparse samples, rating triples, token-id corpora.
# ---------------------------------------------------------------------------

def load_sparse(path: str | Path, dim: int, n_classes: int) -> ClassificationData:
    """Read `label idx:val idx:val ...` lines (0-based indices, one sample
    per line) into a dense dataset."""
    rows = []
    labels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = int(parts[0])
            except ValueError:
                raise ArgumentError(f"{path}:{lineno}: bad label {parts[0]!r}") from None
            row = np.zeros(dim)
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ArgumentError(f"{path}:{lineno}: bad entry {tok!r}") from None
                if not 0 <= idx < dim:
                    raise ArgumentError(f"{path}:{lineno}: index {idx} out of range for dim {dim}")
                row[idx] = val
            rows.append(row)
            labels.append(label)
    features = np.array(rows) if rows else np.zeros((0, dim))
    return ClassificationData(features=features, labels=np.array(labels, dtype=np.int64),
                              n_classes=n_classes)


def write_sparse(data: ClassificationData, path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for i in range(data.n_samples):
            row = data.features[i]
            nz = np.nonzero(row)[0]
            entries = " ".join(f"{j}:{row[j]!r}" for j in nz)
            fh.write(f"{data.labels[i]} {entries}".rstrip() + "\n")


def load_ratings(path: str | Path, rows: int, cols: int) -> RatingsData:
    """Read `row,col,value` CSV lines."""
    r, c, v = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ArgumentError(f"{path}:{lineno}: expected row,col,value")
            try:
                r.append(int(parts[0]))
                c.append(int(parts[1]))
                v.append(float(parts[2]))
            except ValueError:
                raise ArgumentError(f"{path}:{lineno}: bad triple {line!r}") from None
    return RatingsData(n_rows=rows, n_cols=cols, rows=np.array(r, dtype=np.int64),
                       cols=np.array(c, dtype=np.int64), values=np.array(v))


def write_ratings(data: RatingsData, path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for i in range(data.n_observed):
            fh.write(f"{data.rows[i]},{data.cols[i]},{data.values[i]!r}\n")


def load_corpus(path: str | Path, vocab_size: int) -> CorpusData:
    """Read one document per line of space-separated token ids."""
    docs = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                tokens = np.array([int(t) for t in line.split()], dtype=np.int32)
            except ValueError:
                raise ArgumentError(f"{path}:{lineno}: bad token id") from None
            docs.append(tokens)
    return CorpusData(docs=docs, vocab_size=vocab_size)


def write_corpus(data: CorpusData, path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for doc in data.docs:
            fh.write(" ".join(str(t) for t in doc) + "\n")
