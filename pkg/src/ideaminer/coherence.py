"""Intrinsic topic coherence (co-document counts) and topic-count selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .lda import GibbsLda
from .preprocess import BowCorpus

DEFAULT_TOP_N = 10


@dataclass(frozen=True)
class CoherenceResult:
    per_topic: tuple[float, ...]
    aggregate: float
    measure: str = "umass"
    top_n: int = DEFAULT_TOP_N


@dataclass(frozen=True)
class LdaFitConfig:
    """Settings for the proxy fits used while scanning candidate topic counts."""

    alpha: float = 0.1
    eta: float = 0.01
    iterations: int = 1000
    top_n: int = DEFAULT_TOP_N


@dataclass
class SelectKResult:
    best_k: int
    curve: list[tuple[int, float, float]] = field(default_factory=list)


def umass_coherence(topics, bow: BowCorpus, top_n: int = DEFAULT_TOP_N) -> CoherenceResult:
    """Co-document coherence per topic plus the arithmetic mean.

    ``topics`` holds, per topic, term indices ordered from most to least
    probable. For the leading ``top_n`` terms the score sums
    ``log((D(w_i, w_j) + 1) / D(w_j))`` over ranked pairs with j < i, where
    D counts documents containing a term or both terms.
    """
    if top_n < 2:
        raise ValueError("top_n must be at least 2")
    needed: set[int] = set()
    heads: list[list[int]] = []
    for topic_terms in topics:
        head = [int(w) for w in topic_terms[:top_n]]
        if len(head) < 2:
            raise ValueError("each topic must supply at least 2 top terms")
        heads.append(head)
        needed.update(head)

    doc_sets: dict[int, set[int]] = {w: set() for w in needed}
    for d, doc in enumerate(bow.docs):
        for w, _ in doc:
            if w in doc_sets:
                doc_sets[w].add(d)

    scores = []
    for head in heads:
        for w in head:
            if not doc_sets[w]:
                raise ValueError(
                    f"term index {w} occurs in no document; vocabulary mismatch"
                )
        score = 0.0
        for i in range(1, len(head)):
            for j in range(i):
                co = len(doc_sets[head[i]] & doc_sets[head[j]])
                score += math.log((co + 1) / len(doc_sets[head[j]]))
        scores.append(score)
    aggregate = math.fsum(scores) / len(scores)
    return CoherenceResult(tuple(scores), aggregate, "umass", top_n)


def model_top_term_indices(model: GibbsLda, top_n: int) -> list[list[int]]:
    """Per-topic term indices ranked by probability, ties by index.

    Dictionary indices follow sorted term order, so breaking ties by index
    equals breaking them lexicographically.
    """
    topics = []
    for k in range(model.n_topics):
        row = model.topic_term_[k]
        order = sorted(range(row.shape[0]), key=lambda i: (-row[i], i))
        topics.append(order[:top_n])
    return topics


def select_k(
    bow: BowCorpus,
    k_candidates,
    fit_config: LdaFitConfig | None = None,
    seed: int = 0,
) -> SelectKResult:
    """Scan candidate topic counts and keep the most coherent one.

    Each candidate gets a static proxy fit under the same seed; the curve
    records (k, coherence, in-sample perplexity) per distinct candidate.
    Ties prefer the smaller k.
    """
    config = fit_config or LdaFitConfig()
    candidates = sorted(set(int(k) for k in k_candidates))
    if not candidates:
        raise ValueError("no candidate topic counts supplied")
    if candidates[0] < 2:
        raise ValueError("candidate topic counts must be at least 2")
    curve: list[tuple[int, float, float]] = []
    best_k = None
    best_score = -math.inf
    for k in candidates:
        model = GibbsLda(
            n_topics=k,
            alpha=config.alpha,
            eta=config.eta,
            iterations=config.iterations,
            seed=seed,
        ).fit(bow)
        result = umass_coherence(
            model_top_term_indices(model, config.top_n), bow, config.top_n
        )
        curve.append((k, result.aggregate, model.perplexity(bow)))
        if result.aggregate > best_score:
            best_score = result.aggregate
            best_k = k
    return SelectKResult(best_k=best_k, curve=curve)
