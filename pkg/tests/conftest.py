"""Shared synthetic corpora and the acceptance-criteria summary hook.

The generators double as oracles: each corpus is sampled from known
multinomials, so tests can check fitted models against the parameters
that produced the data instead of against other model output.
"""

from __future__ import annotations

import numpy as np
import pytest

from ideaminer.dtm import DynamicTopicModel
from ideaminer.lda import GibbsLda
from ideaminer.preprocess import BowCorpus

TWO_BLOCK_VOCAB = [f"w{i:02d}" for i in range(20)]

DRIFT_VOCAB = [
    "petrol", "battery", "engine", "fuel", "exhaust", "piston",
    "grid", "solar", "wind", "meter", "sensor", "relay", "cable", "tower",
]
DRIFT_YEARS = [2014, 2015, 2016, 2017, 2018]


def _counts_to_doc(indices) -> list[tuple[int, int]]:
    counts: dict[int, int] = {}
    for idx in indices:
        counts[int(idx)] = counts.get(int(idx), 0) + 1
    return sorted(counts.items())


def make_two_block_corpus(n_docs=100, doc_len=50, seed=7, interleave=False):
    """Documents draw uniformly from one of two disjoint 10-term blocks.

    Returns (bow, vocabulary, block labels). Block 0 uses term indices
    0..9, block 1 uses 10..19; documents alternate blocks.

    With ``interleave=True`` block 0 takes the even indices and block 1
    the odd ones instead. An index-ordered term ranking then straddles
    both blocks, so a topic that never earned real counts shows pairs
    that never co-occur and scores badly, which is what lets coherence
    tell an oversplit fit from a clean one.
    """
    rng = np.random.default_rng(seed)
    docs = []
    labels = []
    for d in range(n_docs):
        block = d % 2
        if interleave:
            idx = 2 * rng.integers(0, 10, size=doc_len) + block
        else:
            idx = rng.integers(10 * block, 10 * block + 10, size=doc_len)
        docs.append(_counts_to_doc(idx))
        labels.append(block)
    return BowCorpus(docs, [n_docs]), list(TWO_BLOCK_VOCAB), labels


def drift_topic_a(t: int) -> np.ndarray:
    """Topic A term distribution at slice t: petrol fades, battery rises."""
    petrol = 0.5 - 0.1 * t
    battery = 0.1 + 0.1 * t
    filler = (1.0 - petrol - battery) / 4.0
    probs = np.zeros(len(DRIFT_VOCAB))
    probs[0] = petrol
    probs[1] = battery
    probs[2:6] = filler
    return probs


def drift_topic_b() -> np.ndarray:
    probs = np.zeros(len(DRIFT_VOCAB))
    probs[6:] = 1.0 / 8.0
    return probs


def make_drift_corpus(n_slices=5, docs_per_slice=200, doc_len=25, seed=13):
    """Two-topic corpus where topic A's mass moves from petrol to battery.

    Per slice t, topic A gives petrol 0.5-0.1t and battery 0.1+0.1t with
    four fillers sharing the remainder; topic B is uniform over the eight
    unrelated terms. Documents alternate topics within each slice.
    """
    rng = np.random.default_rng(seed)
    docs = []
    b = drift_topic_b()
    for t in range(n_slices):
        a = drift_topic_a(t)
        for d in range(docs_per_slice):
            probs = a if d % 2 == 0 else b
            indices = rng.choice(len(DRIFT_VOCAB), size=doc_len, p=probs)
            docs.append(_counts_to_doc(indices))
    bow = BowCorpus(docs, [docs_per_slice] * n_slices)
    return bow, list(DRIFT_VOCAB), list(DRIFT_YEARS[:n_slices])


def block_purity(topic_term: np.ndarray) -> float:
    """Best-case two-block purity: min over the matched block masses.

    Tries both topic-to-block assignments and returns the better one,
    scoring an assignment by the smaller of its two block masses so a
    single degenerate topic cannot hide behind a good partner.
    """
    mass0 = topic_term[:, :10].sum(axis=1)  # per-topic mass on block 0
    direct = min(mass0[0], 1.0 - mass0[1])
    swapped = min(mass0[1], 1.0 - mass0[0])
    return max(direct, swapped)


def match_drift_topic(beta: np.ndarray) -> int:
    """Index of the fitted topic carrying the petrol/battery chain."""
    mass = beta[:, :, :6].sum(axis=(0, 2))  # per-topic mass on A terms
    return int(np.argmax(mass))


@pytest.fixture(scope="session")
def two_block():
    return make_two_block_corpus()


@pytest.fixture(scope="session")
def two_block_lda(two_block):
    bow, vocab, _ = two_block
    model = GibbsLda(n_topics=2, iterations=300, seed=42)
    model.fit(bow, vocabulary=vocab)
    return model


@pytest.fixture(scope="session")
def drift():
    return make_drift_corpus()


@pytest.fixture(scope="session")
def drift_model(drift):
    bow, vocab, years = drift
    model = DynamicTopicModel(n_topics=2, seed=5)
    model.fit(bow, vocabulary=vocab, years=years)
    return model


# ---------------------------------------------------------------------------
# Acceptance summary: tests tagged @pytest.mark.criterion(n, text) roll up
# into one PASS/FAIL line per criterion at the end of the run.

_criteria: dict[tuple[int, str], dict] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, text): acceptance criterion the test exercises",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _criteria.setdefault(
        (marker.args[0], marker.args[1]), {"passed": False, "failed": False}
    )
    if report.when == "call" and report.passed:
        entry["passed"] = True
    if report.failed or report.skipped:
        entry["failed"] = True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num, text in sorted(_criteria):
        entry = _criteria[(num, text)]
        verdict = "PASS" if entry["passed"] and not entry["failed"] else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {num}: {text}")
