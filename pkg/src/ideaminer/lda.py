"""Static topic model fitted by collapsed Gibbs sampling.

The sampler sweeps tokens in corpus order; each sweep consumes one uniform
variate per token from a seeded PCG64 generator, so a fit is bit-identical
for equal inputs and seed. Topic-term and document-topic distributions are
smoothed averages of the assignment counts over the post-burn-in sweeps.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .preprocess import BowCorpus

RNG_ALGORITHM = "numpy-pcg64"
BURN_IN_FRACTION = 0.8


@njit(cache=False)
def _gibbs_sweep(doc_ids, term_ids, z, n_dk, n_kt, n_k, alpha, eta, uniforms):
    n_topics = n_kt.shape[0]
    v_eta = n_kt.shape[1] * eta
    cumulative = np.empty(n_topics)
    for i in range(doc_ids.shape[0]):
        d = doc_ids[i]
        w = term_ids[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kt[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for kk in range(n_topics):
            total += (
                (n_kt[kk, w] + eta) / (n_k[kk] + v_eta) * (n_dk[d, kk] + alpha)
            )
            cumulative[kk] = total
        u = uniforms[i] * total
        k = 0
        while k < n_topics - 1 and cumulative[k] < u:
            k += 1
        z[i] = k
        n_dk[d, k] += 1
        n_kt[k, w] += 1
        n_k[k] += 1


def _expand_tokens(bow: BowCorpus) -> tuple[np.ndarray, np.ndarray]:
    doc_ids = []
    term_ids = []
    for d, doc in enumerate(bow.docs):
        for w, c in doc:
            doc_ids.extend([d] * c)
            term_ids.extend([w] * c)
    return (
        np.asarray(doc_ids, dtype=np.int64),
        np.asarray(term_ids, dtype=np.int64),
    )


class GibbsLda(BaseEstimator):
    """Latent Dirichlet allocation via collapsed Gibbs sampling.

    Parameters
    ----------
    n_topics : int, at least 2.
    alpha, eta : symmetric Dirichlet priors for document-topic and
        topic-term distributions.
    iterations : full Gibbs sweeps; the first 80 percent are burn-in.
    seed : RNG seed; fits are deterministic given equal inputs and seed.
    """

    def __init__(
        self,
        n_topics: int = 10,
        alpha: float = 0.1,
        eta: float = 0.01,
        iterations: int = 1000,
        seed: int = 0,
    ):
        self.n_topics = n_topics
        self.alpha = alpha
        self.eta = eta
        self.iterations = iterations
        self.seed = seed

    def fit(self, bow: BowCorpus, y=None, vocabulary=None):
        if self.n_topics < 2:
            raise ValueError("n_topics must be at least 2")
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("alpha and eta must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        num_docs = bow.num_docs
        if num_docs == 0:
            raise ValueError("cannot fit on an empty corpus")
        if self.n_topics > num_docs:
            warnings.warn(
                f"n_topics={self.n_topics} exceeds the {num_docs} documents",
                stacklevel=2,
            )
        if vocabulary is not None:
            vocab_size = len(vocabulary)
            if bow.max_index() >= vocab_size:
                raise ValueError("corpus indices exceed the vocabulary size")
        else:
            vocab_size = bow.max_index() + 1
        if vocab_size < 1:
            raise ValueError("cannot fit on an empty corpus")

        doc_ids, term_ids = _expand_tokens(bow)
        rng = np.random.default_rng(self.seed)
        z = rng.integers(0, self.n_topics, doc_ids.shape[0], dtype=np.int64)

        n_dk = np.zeros((num_docs, self.n_topics), dtype=np.float64)
        n_kt = np.zeros((self.n_topics, vocab_size), dtype=np.float64)
        np.add.at(n_dk, (doc_ids, z), 1.0)
        np.add.at(n_kt, (z, term_ids), 1.0)
        n_k = n_kt.sum(axis=1)

        burn_in = math.floor(self.iterations * BURN_IN_FRACTION)
        sum_dk = np.zeros_like(n_dk)
        sum_kt = np.zeros_like(n_kt)
        samples = 0
        for it in range(self.iterations):
            uniforms = rng.random(doc_ids.shape[0])
            _gibbs_sweep(
                doc_ids, term_ids, z, n_dk, n_kt, n_k, self.alpha, self.eta, uniforms
            )
            if it >= burn_in:
                sum_dk += n_dk
                sum_kt += n_kt
                samples += 1

        avg_kt = sum_kt / samples
        avg_dk = sum_dk / samples
        self.topic_term_ = (avg_kt + self.eta) / (
            avg_kt.sum(axis=1, keepdims=True) + vocab_size * self.eta
        )
        self.doc_topic_ = (avg_dk + self.alpha) / (
            avg_dk.sum(axis=1, keepdims=True) + self.n_topics * self.alpha
        )
        self.vocab_size_ = vocab_size
        self.vocabulary_ = list(vocabulary) if vocabulary is not None else None
        self.rng_algorithm_ = RNG_ALGORITHM
        return self

    def perplexity(self, bow: BowCorpus) -> float:
        check_is_fitted(self)
        return perplexity(self.topic_term_, self.doc_topic_, bow)

    def top_terms(self, topic: int, n: int = 10) -> list[tuple]:
        check_is_fitted(self)
        if not 0 <= topic < self.n_topics:
            raise ValueError(f"topic index {topic} out of range")
        return rank_terms(self.topic_term_[topic], self.vocabulary_, n)

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "format": "ideaminer-lda/1",
            "n_topics": self.n_topics,
            "vocab_size": self.vocab_size_,
            "alpha": self.alpha,
            "eta": self.eta,
            "iterations": self.iterations,
            "seed": self.seed,
            "rng": self.rng_algorithm_,
            "vocabulary": self.vocabulary_,
            "topic_term": self.topic_term_.tolist(),
            "doc_topic": self.doc_topic_.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GibbsLda":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if raw.get("format") != "ideaminer-lda/1":
            raise ValueError(f"unsupported model file format: {raw.get('format')!r}")
        model = cls(
            n_topics=raw["n_topics"],
            alpha=raw["alpha"],
            eta=raw["eta"],
            iterations=raw["iterations"],
            seed=raw["seed"],
        )
        model.topic_term_ = np.asarray(raw["topic_term"])
        model.doc_topic_ = np.asarray(raw["doc_topic"])
        model.vocab_size_ = raw["vocab_size"]
        model.vocabulary_ = raw["vocabulary"]
        model.rng_algorithm_ = raw["rng"]
        return model


def fit_lda(
    bow: BowCorpus,
    n_topics: int,
    alpha: float = 0.1,
    eta: float = 0.01,
    iterations: int = 1000,
    seed: int = 0,
    vocabulary=None,
) -> GibbsLda:
    """Convenience wrapper around :class:`GibbsLda`."""
    model = GibbsLda(
        n_topics=n_topics, alpha=alpha, eta=eta, iterations=iterations, seed=seed
    )
    return model.fit(bow, vocabulary=vocabulary)


def perplexity(topic_term: np.ndarray, doc_topic: np.ndarray, bow: BowCorpus) -> float:
    """In-sample perplexity exp(-log-likelihood per token).

    The token probability mixes topics: p(w|d) = sum_k theta[d,k] phi[k,w].
    Reported values are in-sample goodness of fit, not held-out estimates.
    """
    if doc_topic.shape[0] != bow.num_docs:
        raise ValueError("document-topic matrix does not match the corpus")
    if bow.max_index() >= topic_term.shape[1]:
        raise ValueError("corpus indices exceed the model vocabulary")
    log_likelihood = 0.0
    total = 0
    for d, doc in enumerate(bow.docs):
        ids = np.array([w for w, _ in doc], dtype=np.int64)
        counts = np.array([c for _, c in doc], dtype=np.float64)
        p = doc_topic[d] @ topic_term[:, ids]
        if np.any(p <= 0.0):
            raise ValueError("token probability is zero; model is degenerate")
        log_likelihood += float(counts @ np.log(p))
        total += int(counts.sum())
    if total == 0:
        raise ValueError("corpus has no tokens")
    return float(math.exp(-log_likelihood / total))


def rank_terms(probabilities, vocabulary, n: int) -> list[tuple]:
    """Top ``n`` terms by probability; ties resolve lexicographically.

    Without a vocabulary the integer indices stand in for terms (dictionary
    indices already follow sorted term order).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    probs = np.asarray(probabilities, dtype=np.float64)
    if vocabulary is not None:
        names = list(vocabulary)
        if len(names) != probs.shape[0]:
            raise ValueError("vocabulary length does not match the distribution")
    else:
        names = list(range(probs.shape[0]))
    order = sorted(range(probs.shape[0]), key=lambda i: (-probs[i], names[i]))
    return [(names[i], float(probs[i])) for i in order[:n]]
