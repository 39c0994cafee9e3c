"""CSV ingestion, dedup rules, year binning, and the JSONL round trip."""

import csv

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ideaminer.corpus import (
    BiblioRecord,
    Corpus,
    bin_time_slices,
    deduplicate,
    normalize_title,
    parse_bibliographic_csv,
    read_corpus_jsonl,
    write_corpus_jsonl,
)
from ideaminer.exceptions import IngestError


def write_csv(path, rows, header=("Title", "Abstract", "Year", "DOI", "Source title")):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def test_parse_single_batch(tmp_path):
    path = write_csv(
        tmp_path / "batch.csv",
        [
            ("Lidar mapping", "Mapping with lidar.", "2015", "10.1/a", "J1"),
            ("Radar fusion", "Fusing radar tracks.", "2016", "", "J2"),
        ],
    )
    corpus, report = parse_bibliographic_csv([path])
    assert report.parsed == 2 and report.skipped == 0
    assert [r.title for r in corpus.records] == ["Lidar mapping", "Radar fusion"]
    assert corpus.records[0].id == "10.1/a"
    assert corpus.records[1].id == "rec-000002"  # synthesized when DOI missing


def test_parse_concatenates_batches_in_file_order(tmp_path):
    a = write_csv(tmp_path / "a.csv", [("T1", "x", "2015", "", "")])
    b = write_csv(tmp_path / "b.csv", [("T2", "y", "2016", "", "")])
    corpus, report = parse_bibliographic_csv([a, b])
    assert [r.title for r in corpus.records] == ["T1", "T2"]
    assert [f["file"] for f in report.files] == ["a.csv", "b.csv"]


def test_parse_skips_bad_year_and_missing_title(tmp_path):
    path = write_csv(
        tmp_path / "batch.csv",
        [
            ("Kept", "x", "2015", "", ""),
            ("Bad year", "x", "n/a", "", ""),
            ("", "no title", "2015", "", ""),
        ],
    )
    corpus, report = parse_bibliographic_csv([path])
    assert len(corpus) == 1
    assert report.parsed == 1 and report.skipped == 2


def test_parse_header_only_is_an_error(tmp_path):
    path = write_csv(tmp_path / "empty.csv", [])
    with pytest.raises(IngestError, match="zero rows parsed"):
        parse_bibliographic_csv([path])


def test_parse_missing_mapped_column(tmp_path):
    path = write_csv(tmp_path / "bad.csv", [("T", "2015")], header=("Title", "Year"))
    with pytest.raises(IngestError, match="missing mapped column"):
        parse_bibliographic_csv([path])


def test_parse_field_map_override_and_unmap(tmp_path):
    path = write_csv(
        tmp_path / "alt.csv",
        [("Somewhere", "2014", "A title")],
        header=("Venue", "Published", "Name"),
    )
    corpus, _ = parse_bibliographic_csv(
        [path],
        field_map={
            "title": "Name",
            "year": "Published",
            "source": "Venue",
            "abstract": "",  # unmapped
            "doi": "",
        },
    )
    rec = corpus.records[0]
    assert rec.title == "A title" and rec.year == 2014
    assert rec.source == "Somewhere" and rec.abstract == ""


def test_parse_rfc4180_quoting(tmp_path):
    path = write_csv(
        tmp_path / "q.csv",
        [('Maps, "live" ones', "line1\nline2", "2015", "", "")],
    )
    corpus, _ = parse_bibliographic_csv([path])
    assert corpus.records[0].title == 'Maps, "live" ones'
    assert corpus.records[0].abstract == "line1\nline2"


def test_parse_tolerates_utf8_bom(tmp_path):
    path = tmp_path / "bom.csv"
    path.write_bytes(b"\xef\xbb\xbfTitle,Abstract,Year,DOI,Source title\r\nT,x,2015,,\r\n")
    corpus, _ = parse_bibliographic_csv([path])
    assert corpus.records[0].title == "T"


def test_parse_unreadable_file(tmp_path):
    with pytest.raises(IngestError, match="cannot read"):
        parse_bibliographic_csv([tmp_path / "missing.csv"])


# --- dedup ----------------------------------------------------------------


def rec(id="", title="t", year=2015, abstract="", source=""):
    return BiblioRecord(id=id, title=title, abstract=abstract, year=year, source=source)


def test_normalize_title_rules():
    assert normalize_title("Self-Driving  Cars!") == "self driving cars"
    assert normalize_title("ＳＥＬＦ driving cars") == "self driving cars"  # NFKC fold


def test_dedup_by_id_wins_over_title():
    c = Corpus([rec(id="10.1/x", title="First"), rec(id="10.1/x", title="Second")])
    out, report = deduplicate(c)
    assert len(out) == 1
    assert out.records[0].title == "First"
    assert report.by_id == 1 and report.by_title_year == 0


def test_dedup_by_normalized_title_and_year():
    c = Corpus([rec(title="Self-Driving  Cars!"), rec(title="self driving cars")])
    out, report = deduplicate(c)
    assert len(out) == 1
    assert report.by_title_year == 1


def test_dedup_same_title_different_year_kept():
    c = Corpus([rec(title="Same", year=2015), rec(title="Same", year=2016)])
    out, report = deduplicate(c)
    assert len(out) == 2 and report.total == 0


def test_dedup_preserves_relative_order():
    c = Corpus([rec(id="a", title="A"), rec(id="b", title="B"), rec(id="a", title="C")])
    out, _ = deduplicate(c)
    assert [r.id for r in out.records] == ["a", "b"]


records_strategy = st.lists(
    st.builds(
        rec,
        id=st.sampled_from(["", "10.1/x", "10.1/y", "10.1/z"]),
        title=st.sampled_from(["alpha beta", "Alpha  Beta!", "gamma", "delta eps"]),
        year=st.integers(min_value=2010, max_value=2013),
    ),
    min_size=1,
    max_size=12,
)


@given(records_strategy)
def test_dedup_is_idempotent(records):
    once, _ = deduplicate(Corpus(records))
    twice, report = deduplicate(once)
    assert report.total == 0
    assert twice.records == once.records


@given(records_strategy)
def test_dedup_kept_ids_unique(records):
    out, _ = deduplicate(Corpus(records))
    ids = [r.id for r in out.records if r.id]
    assert len(ids) == len(set(ids))


# --- binning ----------------------------------------------------------------


def test_bin_ten_year_range():
    c = Corpus([rec(title=f"t{y}", year=y) for y in range(2009, 2019)])
    binned, report = bin_time_slices(c, 2009, 2018)
    assert len(binned.years) == 10
    assert binned.slice_sizes() == [1] * 10
    assert report.dropped == 0 and report.empty_years == []


def test_bin_single_record_single_year():
    binned, _ = bin_time_slices(Corpus([rec(year=2015)]), 2015, 2015)
    assert binned.years == [2015]
    assert binned.slice_sizes() == [1]


def test_bin_reports_empty_middle_year():
    c = Corpus([rec(title="a", year=2010), rec(title="b", year=2012)])
    binned, report = bin_time_slices(c, 2010, 2012)
    assert binned.slice_sizes() == [1, 0, 1]
    assert report.empty_years == [2011]


def test_bin_drops_out_of_range_and_counts():
    c = Corpus([rec(title="in", year=2011), rec(title="out", year=1999)])
    binned, report = bin_time_slices(c, 2010, 2012)
    assert len(binned) == 1 and report.dropped == 1


def test_bin_no_record_in_range():
    c = Corpus([rec(year=2015)])
    with pytest.raises(IngestError, match="no record falls inside"):
        bin_time_slices(c, 2000, 2001)


@given(
    st.lists(
        st.builds(rec, title=st.just("t"), year=st.integers(2010, 2020)),
        min_size=1,
        max_size=30,
    )
)
def test_slice_sizes_sum_to_record_count(records):
    # titles collide on purpose; binning does not dedup
    corpus = Corpus(records)
    assert sum(corpus.slice_sizes()) == len(corpus)


# --- JSONL round trip -------------------------------------------------------

field_text = st.text(
    st.characters(blacklist_categories=("Cs",)), min_size=0, max_size=40
)


@given(
    st.lists(
        st.builds(
            rec,
            id=st.sampled_from(["", "10.1/x"]),
            title=field_text.filter(lambda s: s.strip()),
            abstract=field_text,
            source=field_text,
            year=st.integers(1900, 2100),
        ),
        min_size=1,
        max_size=8,
    )
)
def test_jsonl_round_trip_preserves_fields(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("rt") / "corpus.jsonl"
    corpus = Corpus(records)
    write_corpus_jsonl(corpus, path)
    back = read_corpus_jsonl(path, year_range=corpus.year_range)
    assert back.records == corpus.records
    assert back.year_range == corpus.year_range
