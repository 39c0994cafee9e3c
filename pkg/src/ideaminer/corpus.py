"""Bibliographic CSV ingestion, deduplication, and yearly time slicing.

Input files are UTF-8 CSV exports with a header row (RFC 4180 quoting). The
canonical column names follow the common bibliographic export convention and
can be remapped per file set.
"""

from __future__ import annotations

import csv
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import IngestError

DEFAULT_FIELD_MAP = {
    "title": "Title",
    "abstract": "Abstract",
    "year": "Year",
    "doi": "DOI",
    "source": "Source title",
}

# plausible publication years; anything outside is treated as unparsable
YEAR_MIN = 1900
YEAR_MAX = 2100


@dataclass(frozen=True)
class BiblioRecord:
    """One document: stable id (DOI or synthesized), title, abstract, year, venue."""

    id: str
    title: str
    abstract: str
    year: int
    source: str = ""


class Corpus:
    """Ordered records bucketed into contiguous yearly slices.

    ``slice_index`` maps every year in ``year_range`` (inclusive, possibly
    empty buckets) to the positions of the records published that year.
    Record ids are guaranteed unique only after :func:`deduplicate`.
    """

    def __init__(self, records, year_range: tuple[int, int] | None = None):
        records = list(records)
        if not records:
            raise IngestError("corpus has no records")
        if year_range is None:
            years = [r.year for r in records]
            year_range = (min(years), max(years))
        lo, hi = year_range
        if lo > hi:
            raise IngestError(f"invalid year range {lo}..{hi}")
        self.records = records
        self.year_range = (lo, hi)
        self.slice_index: dict[int, list[int]] = {y: [] for y in range(lo, hi + 1)}
        for pos, rec in enumerate(records):
            if not lo <= rec.year <= hi:
                raise IngestError(
                    f"record {rec.id!r} year {rec.year} outside range {lo}..{hi}"
                )
            self.slice_index[rec.year].append(pos)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def years(self) -> list[int]:
        lo, hi = self.year_range
        return list(range(lo, hi + 1))

    def slice_sizes(self) -> list[int]:
        return [len(self.slice_index[y]) for y in self.years]

    def texts(self) -> list[str]:
        """Model input text per record: title and abstract joined."""
        return [f"{r.title} {r.abstract}".strip() for r in self.records]


@dataclass
class ParseReport:
    parsed: int = 0
    skipped: int = 0
    files: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"parsed": self.parsed, "skipped": self.skipped, "files": self.files}


def _parse_year(raw: str) -> int | None:
    try:
        year = int(raw.strip())
    except (ValueError, AttributeError):
        return None
    if not YEAR_MIN <= year <= YEAR_MAX:
        return None
    return year


def parse_bibliographic_csv(
    paths, field_map: dict[str, str] | None = None
) -> tuple[Corpus, ParseReport]:
    """Parse one or more CSV batches into a corpus.

    ``field_map`` maps logical fields (title, abstract, year, doi, source) to
    column names; an empty value unmaps that field. ``title`` and ``year``
    must stay mapped. Rows with a missing title or an unparsable year are
    skipped and counted. Raises :class:`IngestError` for unreadable files,
    headers missing a mapped column, or zero parsed rows overall.
    """
    fmap = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fmap.update(field_map)
    fmap = {k: v for k, v in fmap.items() if v}
    for required in ("title", "year"):
        if required not in fmap:
            raise IngestError(f"field map must resolve a {required} column")

    records: list[BiblioRecord] = []
    report = ParseReport()
    for path in [Path(p) for p in paths]:
        try:
            handle = open(path, encoding="utf-8-sig", newline="")
        except OSError as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
        with handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            for logical, column in fmap.items():
                if column not in header:
                    raise IngestError(
                        f"{path}: header is missing mapped column {column!r}"
                        f" (field {logical!r})"
                    )
            file_parsed = file_skipped = 0
            for row in reader:
                title = (row.get(fmap["title"]) or "").strip()
                year = _parse_year(row.get(fmap["year"]) or "")
                if not title or year is None:
                    file_skipped += 1
                    continue
                doi = (row.get(fmap["doi"]) or "").strip() if "doi" in fmap else ""
                rec_id = doi if doi else f"rec-{len(records) + 1:06d}"
                records.append(
                    BiblioRecord(
                        id=rec_id,
                        title=title,
                        abstract=(row.get(fmap.get("abstract", "")) or "").strip(),
                        year=year,
                        source=(row.get(fmap.get("source", "")) or "").strip(),
                    )
                )
                file_parsed += 1
        report.parsed += file_parsed
        report.skipped += file_skipped
        report.files.append(
            {"file": path.name, "parsed": file_parsed, "skipped": file_skipped}
        )
    if report.parsed == 0:
        raise IngestError("zero rows parsed across all input files")
    return Corpus(records), report


def normalize_title(title: str) -> str:
    """Normalization used for near-duplicate titles.

    NFKC fold, lowercase, non-alphanumerics become spaces, runs of
    whitespace collapse to one space.
    """
    folded = unicodedata.normalize("NFKC", title).lower()
    spaced = "".join(c if c.isalnum() else " " for c in folded)
    return " ".join(spaced.split())


@dataclass
class DedupReport:
    by_id: int = 0
    by_title_year: int = 0

    @property
    def total(self) -> int:
        return self.by_id + self.by_title_year

    def to_dict(self) -> dict:
        return {
            "by_id": self.by_id,
            "by_title_year": self.by_title_year,
            "total": self.total,
        }


def deduplicate(corpus: Corpus) -> tuple[Corpus, DedupReport]:
    """Collapse duplicates to their first occurrence, preserving order.

    A record is a duplicate when it shares a non-empty id with an earlier
    kept record, or failing that, when its normalized title and year both
    match an earlier kept record. Idempotent.
    """
    report = DedupReport()
    seen_ids: set[str] = set()
    seen_keys: set[tuple[str, int]] = set()
    kept: list[BiblioRecord] = []
    for rec in corpus.records:
        if rec.id and rec.id in seen_ids:
            report.by_id += 1
            continue
        key = (normalize_title(rec.title), rec.year)
        if key in seen_keys:
            report.by_title_year += 1
            continue
        if rec.id:
            seen_ids.add(rec.id)
        seen_keys.add(key)
        kept.append(rec)
    return Corpus(kept), report


@dataclass
class BinReport:
    dropped: int = 0
    empty_years: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"dropped": self.dropped, "empty_years": self.empty_years}


def bin_time_slices(
    corpus: Corpus, from_year: int, to_year: int
) -> tuple[Corpus, BinReport]:
    """Re-bucket the corpus over an explicit inclusive year range.

    Records outside the range are dropped and counted; years with no record
    are reported so the analyst can question the data collection.
    """
    if from_year > to_year:
        raise IngestError(f"invalid year range {from_year}..{to_year}")
    kept = [r for r in corpus.records if from_year <= r.year <= to_year]
    if not kept:
        raise IngestError(f"no record falls inside {from_year}..{to_year}")
    binned = Corpus(kept, (from_year, to_year))
    report = BinReport(
        dropped=len(corpus) - len(kept),
        empty_years=[y for y in binned.years if not binned.slice_index[y]],
    )
    return binned, report


def write_corpus_jsonl(corpus: Corpus, path) -> None:
    lines = []
    for r in corpus.records:
        lines.append(
            json.dumps(
                {
                    "id": r.id,
                    "title": r.title,
                    "abstract": r.abstract,
                    "year": r.year,
                    "source": r.source,
                },
                ensure_ascii=False,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus_jsonl(path, year_range: tuple[int, int] | None = None) -> Corpus:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            records.append(
                BiblioRecord(
                    id=raw["id"],
                    title=raw["title"],
                    abstract=raw.get("abstract", ""),
                    year=int(raw["year"]),
                    source=raw.get("source", ""),
                )
            )
    return Corpus(records, year_range)
