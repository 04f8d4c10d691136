"""Latent Dirichlet allocation trained by collapsed Gibbs sampling.

A unit is one document: its value vector is the smoothed document-topic
distribution, and its checkpoint payload is the token-topic assignment
array the distribution derives from.  Word-topic count tables are derived
state and are rebuilt from assignments whenever documents are restored.

The per-token sampling loop runs in a numba kernel fed a precomputed array
of uniforms keyed by (seed, iteration), so sweeps are bitwise reproducible
and replayable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..datagen import CorpusData
from ..errors import StructuralError
from ..params import NormMetric, ParameterState, ParameterUnit
from ..seeding import TAG_INIT, TAG_STEP, substream
from .base import Solver, SolverConfig


@dataclass
class TopicAssignments:
    """Token-topic assignments plus the count tables derived from them."""

    z: np.ndarray             # int32, flat over all tokens
    doc_topic: np.ndarray     # (docs, topics) int64
    word_topic: np.ndarray    # (topics, vocab) int64
    topic_totals: np.ndarray  # (topics,) int64


@njit(cache=True)
def _gibbs_sweep(z, words, offsets, doc_topic, word_topic, topic_totals,
                 alpha, beta, uniforms):
    n_topics = doc_topic.shape[1]
    vocab_beta = beta * word_topic.shape[1]
    probs = np.empty(n_topics)
    for d in range(offsets.shape[0] - 1):
        for pos in range(offsets[d], offsets[d + 1]):
            w = words[pos]
            old = z[pos]
            doc_topic[d, old] -= 1
            word_topic[old, w] -= 1
            topic_totals[old] -= 1
            total = 0.0
            for k in range(n_topics):
                p = (doc_topic[d, k] + alpha) * (word_topic[k, w] + beta) \
                    / (topic_totals[k] + vocab_beta)
                probs[k] = p
                total += p
            target = uniforms[pos] * total
            acc = 0.0
            new = n_topics - 1
            for k in range(n_topics):
                acc += probs[k]
                if acc >= target:
                    new = k
                    break
            z[pos] = new
            doc_topic[d, new] += 1
            word_topic[new, w] += 1
            topic_totals[new] += 1


class CollapsedGibbsLda(Solver):
    group = "lda-doc"

    def __init__(self, cfg: SolverConfig, data: CorpusData):
        super().__init__(cfg, data)
        self.topics = cfg.topics
        self.vocab = data.vocab_size
        self.n_docs = data.n_docs
        self.lengths = data.doc_lengths
        self.offsets = np.zeros(self.n_docs + 1, dtype=np.int64)
        np.cumsum(self.lengths, out=self.offsets[1:])
        self.words = np.concatenate(data.docs).astype(np.int32)
        self.doc_of_token = np.repeat(np.arange(self.n_docs, dtype=np.int64), self.lengths)

    # -- state construction --------------------------------------------------

    def _tables_from_z(self, z: np.ndarray) -> TopicAssignments:
        doc_topic = np.zeros((self.n_docs, self.topics), dtype=np.int64)
        np.add.at(doc_topic, (self.doc_of_token, z), 1)
        word_topic = np.zeros((self.topics, self.vocab), dtype=np.int64)
        np.add.at(word_topic, (z, self.words), 1)
        return TopicAssignments(z=z, doc_topic=doc_topic, word_topic=word_topic,
                                topic_totals=word_topic.sum(axis=1))

    def _doc_distributions(self, doc_topic: np.ndarray) -> np.ndarray:
        alpha = self.cfg.dirichlet_alpha
        return (doc_topic + alpha) / (self.lengths[:, None] + self.topics * alpha)

    def _state_from_aux(self, aux: TopicAssignments, iteration: int) -> ParameterState:
        theta = self._doc_distributions(aux.doc_topic)
        units = {d: ParameterUnit(d, theta[d], self.group) for d in range(self.n_docs)}
        return ParameterState(iteration=iteration, units=units, aux=aux)

    def init_state(self) -> ParameterState:
        rng = substream(self.cfg.seed, TAG_INIT)
        z = rng.integers(0, self.topics, size=self.words.size).astype(np.int32)
        return self._state_from_aux(self._tables_from_z(z), 0)

    # -- training ------------------------------------------------------------

    def step(self, state: ParameterState) -> ParameterState:
        aux = self._require_aux(state)
        z = aux.z.copy()
        doc_topic = aux.doc_topic.copy()
        word_topic = aux.word_topic.copy()
        topic_totals = aux.topic_totals.copy()
        uniforms = substream(self.cfg.seed, TAG_STEP, state.iteration).random(self.words.size)
        _gibbs_sweep(z, self.words, self.offsets, doc_topic, word_topic, topic_totals,
                     self.cfg.dirichlet_alpha, self.cfg.dirichlet_beta, uniforms)
        new_aux = TopicAssignments(z=z, doc_topic=doc_topic, word_topic=word_topic,
                                   topic_totals=topic_totals)
        return self._state_from_aux(new_aux, state.iteration + 1)

    def loss(self, state: ParameterState) -> float:
        """Negative log-likelihood of the tokens under the smoothed
        document-topic and word-topic estimates."""
        aux = self._require_aux(state)
        theta = self._doc_distributions(aux.doc_topic)
        beta = self.cfg.dirichlet_beta
        phi = (aux.word_topic + beta) / (aux.topic_totals[:, None] + self.vocab * beta)
        token_prob = np.einsum("dk,kd->d", theta[self.doc_of_token],
                               phi[:, self.words])
        return float(-np.log(token_prob).sum())

    def default_metric(self) -> NormMetric:
        return NormMetric(kind="scaled_tv",
                          weights={d: float(self.lengths[d]) for d in range(self.n_docs)})

    # -- aux reconstruction ----------------------------------------------------

    def _require_aux(self, state: ParameterState) -> TopicAssignments:
        if not isinstance(state.aux, TopicAssignments):
            raise StructuralError("state is missing token-topic assignments")
        return state.aux

    def rebuild_aux(self, state: ParameterState) -> ParameterState:
        """Recompute all count tables and distributions from assignments."""
        aux = self._require_aux(state)
        if aux.z.shape != self.words.shape:
            raise StructuralError("assignment array does not cover every token")
        return self._state_from_aux(self._tables_from_z(aux.z), state.iteration)

    # -- checkpoint payloads ----------------------------------------------------

    def checkpoint_payload(self, state: ParameterState, unit_id: int) -> np.ndarray:
        aux = self._require_aux(state)
        if not 0 <= unit_id < self.n_docs:
            raise StructuralError(f"unknown unit id {unit_id}")
        return aux.z[self.offsets[unit_id]:self.offsets[unit_id + 1]].astype(np.uint32)

    def compare_values(self, payload: np.ndarray, unit_id: int) -> np.ndarray:
        counts = np.bincount(payload.astype(np.int64), minlength=self.topics)
        alpha = self.cfg.dirichlet_alpha
        return (counts + alpha) / (self.lengths[unit_id] + self.topics * alpha)

    def restore_payloads(self, state: ParameterState,
                         payloads: dict[int, np.ndarray]) -> ParameterState:
        aux = self._require_aux(state)
        z = aux.z.copy()
        for uid, payload in payloads.items():
            if not 0 <= uid < self.n_docs:
                raise StructuralError(f"unknown unit id {uid}")
            lo, hi = self.offsets[uid], self.offsets[uid + 1]
            if payload.shape != (hi - lo,):
                raise StructuralError(f"unit {uid}: payload length {payload.size} "
                                      f"does not match document length {hi - lo}")
            z[lo:hi] = payload.astype(np.int32)
        return self._state_from_aux(self._tables_from_z(z), state.iteration)
