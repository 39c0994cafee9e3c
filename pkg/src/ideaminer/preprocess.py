"""Tokenization, collocation detection, dictionary filtering, vectorization."""

from __future__ import annotations

import csv
import json
import re
import unicodedata
from collections import Counter
from importlib import resources
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyVocabularyError, PreprocessError
from .stem import stable_stem

# contiguous alphabetic runs; digits and underscores break a run
_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)
_MIN_TOKEN_LEN = 3


def load_stopwords(extra_path=None) -> frozenset[str]:
    """Bundled English stopwords, optionally extended from a user file.

    Extension files hold one term per line; blank lines and lines starting
    with ``#`` are ignored. Terms are matched after NFKC folding and
    lowercasing.
    """
    words: set[str] = set()

    def _collect(text: str) -> None:
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            words.add(unicodedata.normalize("NFKC", line).lower())

    bundled = resources.files("ideaminer").joinpath("data/stopwords_en.txt")
    _collect(bundled.read_text(encoding="utf-8"))
    if extra_path is not None:
        _collect(Path(extra_path).read_text(encoding="utf-8"))
    return frozenset(words)


def load_lemma_table(path) -> dict[str, str]:
    """Read a surface-to-lemma table from a two-column tab-separated file."""
    table: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise PreprocessError(f"bad lemma table line: {line!r}")
        table[parts[0].strip()] = parts[1].strip()
    return table


def tokenize(text: str, stopwords: frozenset[str] = frozenset()) -> list[str]:
    """NFKC-fold, lowercase, keep alphabetic runs of length >= 3, drop stopwords."""
    folded = unicodedata.normalize("NFKC", text).lower()
    return [
        tok
        for tok in _TOKEN_RE.findall(folded)
        if len(tok) >= _MIN_TOKEN_LEN and tok not in stopwords
    ]


def tokenize_and_normalize(
    text: str,
    stopwords: frozenset[str] = frozenset(),
    mode: str = "stem",
    lemma_table: dict[str, str] | None = None,
) -> list[str]:
    """Tokenize then reduce each token to its stem or lemma.

    ``mode`` is ``"stem"`` (suffix stripping) or ``"lemma"`` (table lookup;
    tokens missing from the table pass through unchanged).
    """
    tokens = tokenize(text, stopwords)
    if mode == "stem":
        return [stable_stem(t) for t in tokens]
    if mode == "lemma":
        table = lemma_table or {}
        return [table.get(t, t) for t in tokens]
    raise PreprocessError(f"unknown normalization mode {mode!r}")


class BigramDetector(BaseEstimator, TransformerMixin):
    """Append compound tokens for adjacent pairs that score above a threshold.

    A pair (a, b) qualifies when it occurs at least ``min_count`` times and

        (count(ab) - min_count) * total_tokens / (count(a) * count(b))

    exceeds ``threshold``. ``transform`` appends one ``a_b`` token per
    occurrence of the adjacent pair and never removes the unigrams.
    """

    def __init__(self, min_count: int = 5, threshold: float = 10.0):
        self.min_count = min_count
        self.threshold = threshold

    def fit(self, token_docs, y=None):
        if self.min_count < 1:
            raise PreprocessError("min_count must be at least 1")
        unigrams: Counter = Counter()
        pairs: Counter = Counter()
        total = 0
        for doc in token_docs:
            unigrams.update(doc)
            total += len(doc)
            pairs.update(zip(doc, doc[1:]))
        scores: dict[tuple[str, str], float] = {}
        for (a, b), c_ab in pairs.items():
            if c_ab < self.min_count:
                continue
            score = (c_ab - self.min_count) * total / (unigrams[a] * unigrams[b])
            if score > self.threshold:
                scores[(a, b)] = score
        self.phrases_ = scores
        self.total_tokens_ = total
        return self

    def transform(self, token_docs):
        check_is_fitted(self)
        out = []
        for doc in token_docs:
            merged = list(doc)
            for pair in zip(doc, doc[1:]):
                if pair in self.phrases_:
                    merged.append(f"{pair[0]}_{pair[1]}")
            out.append(merged)
        return out


def detect_bigrams(token_docs, min_count: int = 5, threshold: float = 10.0):
    """One-shot collocation pass over a token corpus."""
    detector = BigramDetector(min_count=min_count, threshold=threshold)
    return detector.fit(token_docs).transform(token_docs)


class Dictionary:
    """Dense term index; indices follow sorted term order."""

    def __init__(self, terms, doc_freq, num_docs: int):
        self.id_to_term = list(terms)
        self.term_to_id = {t: i for i, t in enumerate(self.id_to_term)}
        self.doc_freq = list(doc_freq)
        self.num_docs = num_docs
        if len(self.doc_freq) != len(self.id_to_term):
            raise PreprocessError("doc_freq length does not match term count")

    def __len__(self) -> int:
        return len(self.id_to_term)

    def __contains__(self, term: str) -> bool:
        return term in self.term_to_id

    def lookup(self, term: str) -> int:
        return self.term_to_id[term]

    def to_dict(self) -> dict:
        return {
            "terms": self.id_to_term,
            "doc_freq": self.doc_freq,
            "num_docs": self.num_docs,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Dictionary":
        return cls(raw["terms"], raw["doc_freq"], raw["num_docs"])

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> "Dictionary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_dictionary(
    token_docs, min_doc_count: int = 100, max_doc_fraction: float = 0.95
) -> Dictionary:
    """Keep terms appearing in at least ``min_doc_count`` documents and in at
    most ``max_doc_fraction`` of them (both boundaries inclusive)."""
    if min_doc_count < 1:
        raise PreprocessError("min_doc_count must be at least 1")
    if not 0.0 < max_doc_fraction <= 1.0:
        raise PreprocessError("max_doc_fraction must be in (0, 1]")
    num_docs = len(token_docs)
    df: Counter = Counter()
    for doc in token_docs:
        df.update(set(doc))
    # small epsilon so an exact fraction boundary stays inclusive under floats
    ceiling = max_doc_fraction * num_docs + 1e-9
    kept = sorted(t for t, c in df.items() if c >= min_doc_count and c <= ceiling)
    if not kept:
        raise EmptyVocabularyError(
            "dictionary is empty after frequency filtering; "
            "collect more documents or lower min_doc_count"
        )
    return Dictionary(kept, [df[t] for t in kept], num_docs)


class BowCorpus:
    """Sparse term-count documents ordered slice by slice."""

    def __init__(self, docs, slice_sizes=None):
        self.docs = [list(doc) for doc in docs]
        if slice_sizes is None:
            slice_sizes = [len(self.docs)]
        self.slice_sizes = list(slice_sizes)
        if sum(self.slice_sizes) != len(self.docs):
            raise PreprocessError("slice sizes do not sum to the document count")

    @property
    def num_docs(self) -> int:
        return len(self.docs)

    @property
    def num_slices(self) -> int:
        return len(self.slice_sizes)

    def slice_bounds(self) -> list[tuple[int, int]]:
        bounds = []
        start = 0
        for size in self.slice_sizes:
            bounds.append((start, start + size))
            start += size
        return bounds

    def total_tokens(self) -> int:
        return sum(c for doc in self.docs for _, c in doc)

    def max_index(self) -> int:
        return max((i for doc in self.docs for i, _ in doc), default=-1)

    def to_dict(self) -> dict:
        return {"slice_sizes": self.slice_sizes, "docs": self.docs}

    @classmethod
    def from_dict(cls, raw: dict) -> "BowCorpus":
        docs = [[(int(i), int(c)) for i, c in doc] for doc in raw["docs"]]
        return cls(docs, raw["slice_sizes"])


def vectorize(
    token_docs, dictionary: Dictionary, slice_sizes=None
) -> tuple[BowCorpus, int]:
    """Count in-vocabulary tokens per document.

    Out-of-vocabulary tokens are dropped silently; documents left empty are
    dropped and counted, and per-slice sizes are recomputed. ``slice_sizes``
    describes how ``token_docs`` is ordered (one slice by default).
    """
    if slice_sizes is None:
        slice_sizes = [len(token_docs)]
    if sum(slice_sizes) != len(token_docs):
        raise PreprocessError("slice sizes do not sum to the document count")
    docs: list[list[tuple[int, int]]] = []
    new_sizes: list[int] = []
    dropped = 0
    cursor = 0
    for size in slice_sizes:
        kept_in_slice = 0
        for doc in token_docs[cursor : cursor + size]:
            counts = Counter(
                dictionary.term_to_id[t] for t in doc if t in dictionary.term_to_id
            )
            if not counts:
                dropped += 1
                continue
            docs.append(sorted(counts.items()))
            kept_in_slice += 1
        new_sizes.append(kept_in_slice)
        cursor += size
    if not docs:
        raise PreprocessError("all documents are empty after vocabulary filtering")
    return BowCorpus(docs, new_sizes), dropped


def frequency_report(token_docs, top_n: int = 100) -> list[tuple[str, int, int]]:
    """Most frequent terms as (term, total count, document frequency).

    Ranked by descending count, ties broken lexicographically. Intended for
    stopword curation before modeling.
    """
    if top_n < 1:
        raise PreprocessError("top_n must be at least 1")
    totals: Counter = Counter()
    df: Counter = Counter()
    for doc in token_docs:
        totals.update(doc)
        df.update(set(doc))
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(term, count, df[term]) for term, count in ranked[:top_n]]


def write_frequency_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["term", "count", "doc_freq"])
        for term, count, doc_freq in rows:
            writer.writerow([term, count, doc_freq])
