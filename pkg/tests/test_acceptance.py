"""The eight guarantees this distribution makes about itself, one section each.

Every test carries a criterion marker, so the run summary ends with one
PASS/FAIL line per guarantee. Tolerances and time budgets here are
contractual; loosening one is an interface change, not a test fix.
"""

import csv
import json
import math
import os
import time

import numpy as np
import pytest

from ideaminer.coherence import LdaFitConfig, select_k, umass_coherence
from ideaminer.corpus import deduplicate, parse_bibliographic_csv
from ideaminer.dtm import DynamicTopicModel
from ideaminer.lda import GibbsLda
from ideaminer.preprocess import BowCorpus, build_dictionary
from ideaminer.report import CRISP_DM_NAMES, PHASE_NAMES
from ideaminer.trends import (
    TermTrajectory,
    classify_trend,
    method_gate,
    ols_forecast,
    pearson_correlation,
)

from conftest import block_purity, make_two_block_corpus, match_drift_topic
from test_cli import invoke, tree_bytes, write_config, write_corpus
from test_dtm import monotone_dropping_at_most_one

C1 = pytest.mark.criterion(1, "statistical oracles agree to 1e-9")
C2 = pytest.mark.criterion(2, "gates and dictionary boundaries enforced")
C3 = pytest.mark.criterion(3, "separable corpus recovered deterministically")
C4 = pytest.mark.criterion(4, "dynamic model invariants hold on drift corpus")
C5 = pytest.mark.criterion(5, "model selection lands within one of planted count")
C6 = pytest.mark.criterion(6, "pipeline bundles are byte-identical and traceable")
C7 = pytest.mark.criterion(7, "batched ingest dedupes to exact record count")
C8 = pytest.mark.criterion(8, "trend fixtures classify and reversal flips")


# --- 1: statistical oracles -----------------------------------------------------
# Brute-force reimplementations, deliberately plain: direct sums, no shared
# code with the library.


def brute_pearson(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def brute_ols(years, values):
    n = len(years)
    mx = sum(years) / n
    my = sum(values) / n
    sxx = sum((x - mx) ** 2 for x in years)
    slope = sum((x - mx) * (y - my) for x, y in zip(years, values)) / sxx
    intercept = my - slope * mx
    residuals = [y - (intercept + slope * x) for x, y in zip(years, values)]
    rse = math.sqrt(sum(r * r for r in residuals) / (n - 2)) if n > 2 else 0.0
    return slope, intercept, rse


def brute_umass(head, docs):
    sets = {w: {d for d, doc in enumerate(docs) if w in doc} for w in head}
    score = 0.0
    for i in range(1, len(head)):
        for j in range(i):
            co = len(sets[head[i]] & sets[head[j]])
            score += math.log((co + 1) / len(sets[head[j]]))
    return score


@C1
def test_pearson_hand_fixture():
    result = pearson_correlation([1, 2, 3, 4], [1, 3, 2, 4])
    assert result.r == pytest.approx(0.8, abs=1e-9)


@C1
def test_ols_hand_fixture():
    traj = TermTrajectory(0, "t", (1, 2, 3, 4), (1.0, 2.0, 2.0, 3.0))
    fc = ols_forecast(traj, horizon_years=1)
    assert fc.slope == pytest.approx(0.6, abs=1e-9)
    assert fc.intercept == pytest.approx(0.5, abs=1e-9)
    assert fc.rse == pytest.approx(math.sqrt(0.1), abs=1e-9)  # 0.31623


@C1
def test_umass_hand_fixture():
    # d1={a,b}, d2={a,b}, d3={a,c}; topic (a,c): log((1+1)/3) = log(2/3)
    bow = BowCorpus([[(0, 1), (1, 1)], [(0, 1), (1, 1)], [(0, 1), (2, 1)]], [3])
    result = umass_coherence([[0, 2]], bow, top_n=2)
    assert result.aggregate == pytest.approx(math.log(2 / 3), abs=1e-9)


@C1
def test_small_fixtures_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        n = int(rng.integers(3, 11))
        x = [float(v) for v in rng.normal(size=n)]
        y = [float(v) for v in rng.normal(size=n)]
        got = pearson_correlation(x, y).r
        assert got == pytest.approx(brute_pearson(x, y), abs=1e-9)
    for _ in range(10):
        n = int(rng.integers(4, 11))
        years = [2000 + i for i in range(n)]
        values = [float(v) for v in rng.uniform(0.0, 1.0, size=n)]
        fc = ols_forecast(TermTrajectory(0, "t", tuple(years), tuple(values)), 1)
        slope, intercept, rse = brute_ols(years, values)
        assert fc.slope == pytest.approx(slope, abs=1e-9)
        assert fc.intercept == pytest.approx(intercept, abs=1e-9)
        assert fc.rse == pytest.approx(rse, abs=1e-9)
    for _ in range(10):
        n_docs = int(rng.integers(2, 11))
        docs = []
        while True:
            docs = [
                set(rng.choice(6, size=int(rng.integers(2, 5)), replace=False))
                for _ in range(n_docs)
            ]
            if set().union(*docs) == set(range(6)):
                break
        bow = BowCorpus([sorted((w, 1) for w in doc) for doc in docs], [n_docs])
        head = [int(w) for w in rng.permutation(6)[:3]]
        got = umass_coherence([head], bow, top_n=3).aggregate
        assert got == pytest.approx(brute_umass(head, docs), abs=1e-9)


# --- 2: rule gates and dictionary boundaries -------------------------------------


@C2
def test_regression_gate_refuses_three_observations():
    refused = method_gate(3, "regression")
    assert not refused.permitted
    assert "at least 4" in refused.reason
    assert method_gate(4, "regression").permitted


@C2
def test_arima_gate_refuses_ten_observations():
    refused = method_gate(10, "arima")
    assert not refused.permitted
    assert "at least 50" in refused.reason


@C2
def test_dictionary_boundaries_are_inclusive():
    docs = []
    for i in range(5000):
        doc = [f"filler{i % 40:02d}"]
        if i < 99:
            doc.append("rare")  # 99 docs, one below the floor
        if i < 100:
            doc.append("atfloor")  # exactly 100, kept
        if i < 4800:
            doc.append("common")  # 96%, above the cap
        if i < 4750:
            doc.append("atcap")  # exactly 95%, kept
        docs.append(doc)
    d = build_dictionary(docs, min_doc_count=100, max_doc_fraction=0.95)
    assert "rare" not in d.term_to_id
    assert "atfloor" in d.term_to_id
    assert "common" not in d.term_to_id
    assert "atcap" in d.term_to_id


# --- 3: static model recovery ------------------------------------------------------


@C3
def test_lda_recovers_two_blocks_deterministically_in_time():
    bow, vocab, _ = make_two_block_corpus()  # 100 docs x 50 tokens
    started = time.perf_counter()
    first = GibbsLda(n_topics=2, seed=42).fit(bow, vocabulary=vocab)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    assert block_purity(first.topic_term_) >= 0.9
    second = GibbsLda(n_topics=2, seed=42).fit(bow, vocabulary=vocab)
    assert np.array_equal(first.topic_term_, second.topic_term_)
    assert np.array_equal(first.doc_topic_, second.doc_topic_)


# --- 4: dynamic model properties ----------------------------------------------------


@C4
def test_dtm_normalization_and_objective(drift_model):
    np.testing.assert_allclose(drift_model.beta_.sum(axis=2), 1.0, atol=1e-6)
    trace = drift_model.elbo_trace_
    for prev, cur in zip(trace, trace[1:]):
        assert cur >= prev - 1e-6 * abs(prev)


@C4
def test_dtm_recovers_the_planted_drift(drift_model):
    k = match_drift_topic(drift_model.beta_)
    petrol = list(drift_model.term_trajectory(k, "petrol").values)
    battery = list(drift_model.term_trajectory(k, "battery").values)
    assert monotone_dropping_at_most_one(petrol, direction=-1)
    assert monotone_dropping_at_most_one(battery, direction=+1)


@C4
def test_dtm_tiny_variance_pins_slices(drift):
    bow, vocab, years = drift
    model = DynamicTopicModel(n_topics=2, chain_variance=1e-8, seed=5)
    model.fit(bow, vocabulary=vocab, years=years)
    assert np.abs(model.beta_ - model.beta_[0]).max() < 0.05


@C4
def test_dtm_scale_fit_under_two_minutes():
    rng = np.random.default_rng(77)
    vocab_size = 500
    topics = rng.dirichlet(np.full(vocab_size, 0.08), size=2)
    docs = []
    for _ in range(5):
        for d in range(200):
            draws = rng.choice(vocab_size, size=40, p=topics[d % 2])
            counts: dict[int, int] = {}
            for w in draws:
                counts[int(w)] = counts.get(int(w), 0) + 1
            docs.append(sorted(counts.items()))
    bow = BowCorpus(docs, [200] * 5)
    started = time.perf_counter()
    model = DynamicTopicModel(n_topics=2, seed=0).fit(bow)
    assert time.perf_counter() - started < 120.0
    np.testing.assert_allclose(model.beta_.sum(axis=2), 1.0, atol=1e-6)


# --- 5: topic-count selection ----------------------------------------------------------


@C5
def test_select_k_prefers_the_planted_count():
    bow, _, _ = make_two_block_corpus(interleave=True)
    result = select_k(
        bow, [2, 3, 4, 5], LdaFitConfig(iterations=400, top_n=10), seed=11
    )
    assert result.best_k in (2, 3)
    assert [k for k, _, _ in result.curve] == [2, 3, 4, 5]


@C5
def test_emitted_curve_has_one_row_per_candidate(pipeline_runs):
    out_a, _ = pipeline_runs
    with open(out_a / "coherence_curve.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["K", "coherence", "perplexity"]
    assert [row[0] for row in rows[1:]] == ["2", "3", "4", "5"]


# --- 6: pipeline determinism and traceability ----------------------------------------


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    """The same `run` twice, same config and seed, different directories."""
    mp = pytest.MonkeyPatch()
    mp.delenv("SOURCE_DATE_EPOCH", raising=False)
    for key in list(os.environ):
        if key.startswith("IDEAMINER_"):
            mp.delenv(key)
    base = tmp_path_factory.mktemp("pipeline")
    write_corpus(base)
    cfg = write_config(base, k_candidates="2,3,4,5")
    out_a = base / "out_a"
    out_b = base / "out_b"
    for out in (out_a, out_b):
        result = invoke(["run", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.stderr
    yield out_a, out_b
    mp.undo()


@C6
def test_two_runs_are_byte_identical(pipeline_runs):
    out_a, out_b = pipeline_runs
    a, b = tree_bytes(out_a), tree_bytes(out_b)
    assert "report/report.md" in a
    assert set(a) == set(b)
    for name in a:
        assert a[name] == b[name], f"{name} differs between runs"


@C6
def test_report_has_six_phase_sections_in_order(pipeline_runs):
    out_a, _ = pipeline_runs
    text = (out_a / "report" / "report.md").read_text(encoding="utf-8")
    headings = [l for l in text.splitlines() if l.startswith("## Phase ")]
    assert headings == [
        f"## Phase {n}: {PHASE_NAMES[n]} ({CRISP_DM_NAMES[n]})"
        for n in range(1, 7)
    ]


def md_table_cells(text: str, section: str) -> list[str]:
    lines = text.splitlines()
    start = lines.index(f"### {section}")
    cells = []
    for line in lines[start + 1 :]:
        if line.startswith("### ") or line.startswith("## "):
            break
        if not line.startswith("|") or set(line) <= {"|", "-", " "}:
            continue
        cells.extend(c.strip() for c in line.strip("|").split("|"))
    return [c for c in cells if c]


@C6
def test_every_rendered_table_cell_comes_from_a_csv(pipeline_runs):
    out_a, _ = pipeline_runs
    bundle = out_a / "report"
    text = (bundle / "report.md").read_text(encoding="utf-8")
    sections = {
        "Most frequent terms": "frequency.csv",
        "Coherence by topic count": "coherence_curve.csv",
        "Term trend classification": "trends.csv",
        "Forecasts": "forecasts.csv",
        "Term correlations": "correlations.csv",
        "Term trajectories": "trajectories.csv",
    }
    for section, name in sections.items():
        with open(bundle / "csv" / name, encoding="utf-8", newline="") as fh:
            exported = {cell for row in csv.reader(fh) for cell in row}
        for cell in md_table_cells(text, section):
            assert cell in exported, f"{section}: {cell!r} not in {name}"
    selected = json.loads((bundle / "report.json").read_text(encoding="utf-8"))
    assert f"Selected topic count: {selected['selected_k']}" in text


# --- 7: batched ingestion and exact dedup ---------------------------------------------


def _write_batch(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["Title", "Abstract", "Year", "DOI", "Source title"]
        )
        writer.writeheader()
        writer.writerows(rows)


def _row(i: int, title=None, year=None, doi=""):
    return {
        "Title": title if title is not None else f"record number {i:04d}",
        "Abstract": "study of automated driving perception",
        "Year": str(year if year is not None else 2009 + i % 10),
        "DOI": doi,
        "Source title": "Proceedings",
    }


@C7
def test_three_batches_parse_and_dedupe_exactly(tmp_path):
    batch1 = [_row(i, doi=f"10.2/r{i:04d}") for i in range(2000)]
    batch2 = [_row(i, doi=f"10.2/r{i:04d}") for i in range(2000, 4000)]
    # 1410 fresh rows, 8 DOI duplicates of batch1, 6 title+year duplicates
    # of batch2 under normalization, and one same-title control from a
    # different year that must survive
    batch3 = [_row(i, doi=f"10.2/r{i:04d}") for i in range(4000, 5410)]
    for j in range(8):
        batch3.append(
            _row(9000 + j, title=f"retracted variant {j}", doi=f"10.2/r{j:04d}")
        )
    for j in range(6):
        i = 2000 + j
        batch3.append(
            _row(i, title=f"Record  Number {i:04d}!", year=2009 + i % 10)
        )
    control_year = (2009 + 5 % 10) + 1
    batch3.append(_row(5, title="record number 0005", year=control_year))
    assert len(batch3) == 1425

    paths = []
    for name, rows in (("b1.csv", batch1), ("b2.csv", batch2), ("b3.csv", batch3)):
        path = tmp_path / name
        _write_batch(path, rows)
        paths.append(path)

    corpus, report = parse_bibliographic_csv(paths)
    assert report.parsed == 5425
    assert report.skipped == 0
    assert len(corpus) == 5425

    deduped, dedup_report = deduplicate(corpus)
    assert dedup_report.by_id == 8
    assert dedup_report.by_title_year == 6
    assert len(deduped) == 5425 - 14

    # first occurrence wins: the batch1 titles survive, the variants do not
    titles = {r.title for r in deduped.records}
    assert "retracted variant 0" not in titles
    assert "record number 0000" in titles
    # the control shares a normalized title but not a year, so both remain
    assert sum(1 for r in deduped.records if r.title.lower().startswith("record number 0005")) == 2


# --- 8: trend classification -------------------------------------------------------


def _classify(values, years=(2014, 2015, 2016, 2017, 2018), alpha=0.05) -> str:
    traj = TermTrajectory(0, "t", tuple(years[: len(values)]), tuple(values))
    return classify_trend(ols_forecast(traj, 1), alpha_level=alpha)


@C8
def test_trend_fixtures_classify():
    assert _classify((0.1, 0.2, 0.3, 0.4, 0.5)) == "increasing"
    assert _classify((0.5, 0.4, 0.3, 0.2, 0.1)) == "decreasing"
    # p = 1 - sqrt(0.9) ~ 0.0513 sits just above the 0.05 line
    assert _classify((0.1, 0.2, 0.2, 0.3), years=(2015, 2016, 2017, 2018)) == "flat"
    assert _classify((0.3, 0.29, 0.31, 0.3, 0.3)) == "flat"


@C8
def test_reversal_flips_the_classification():
    rising = (0.05, 0.1, 0.22, 0.3, 0.41)
    assert _classify(rising) == "increasing"
    assert _classify(tuple(reversed(rising))) == "decreasing"
    marginal = (0.1, 0.2, 0.2, 0.3)
    assert _classify(marginal, years=(2015, 2016, 2017, 2018)) == "flat"
    assert _classify(tuple(reversed(marginal)), years=(2015, 2016, 2017, 2018)) == "flat"
