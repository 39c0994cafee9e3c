"""Phase logging and report assembly.

The pipeline is organized as six named phases, each paired with the
classic data-mining stage it adapts. Every command appends an entry to a
phase log; the reporting step renders the log plus the accumulated
artifacts into a bundle: a markdown document, a JSON index, verbatim
copies of the CSV exports, the phase log, and a label template for
analysts.

Rendered tables copy CSV cell strings verbatim, so every number a reader
sees in the document also exists in a machine-readable export.

Timestamps honor the SOURCE_DATE_EPOCH convention and default to epoch
zero, which keeps bundles byte-identical across repeat runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .exceptions import MissingArtifactError

PHASES = (
    (1, "Technology Need Assessment", "Business Understanding"),
    (2, "Data Collection and Understanding", "Data Understanding"),
    (3, "Data Preparation", "Data Preparation"),
    (4, "Modeling for Idea Extraction", "Modeling"),
    (5, "Evaluation and Idea Extraction", "Evaluation"),
    (6, "Reporting Innovative Ideas", "Deployment"),
)
PHASE_NAMES = {num: name for num, name, _ in PHASES}
CRISP_DM_NAMES = {num: counterpart for num, _, counterpart in PHASES}
# allowed fallback arrows: a phase that fails its gate returns to this one
BACK_TRANSITIONS = {2: 1, 3: 2, 4: 3, 5: 1}

CHECKLIST_KEYS = (
    "novelty",
    "necessity",
    "usability",
    "usefulness",
    "technical",
    "market",
    "financial",
    "social",
)

DEFAULT_MIN_R = 0.7
DEFAULT_ALPHA_LEVEL = 0.05

# artifact file -> (producing subcommand, phase name) for dependency errors
ARTIFACT_PRODUCERS = {
    "corpus.jsonl": ("ingest", PHASE_NAMES[2]),
    "ingest_report.json": ("ingest", PHASE_NAMES[2]),
    "dictionary.json": ("preprocess", PHASE_NAMES[3]),
    "bow.json": ("preprocess", PHASE_NAMES[3]),
    "frequency.csv": ("preprocess", PHASE_NAMES[3]),
    "preprocess_report.json": ("preprocess", PHASE_NAMES[3]),
    "coherence_curve.csv": ("select-k", PHASE_NAMES[4]),
    "select_k.json": ("select-k", PHASE_NAMES[4]),
    "dtm_model.json": ("fit", PHASE_NAMES[4]),
    "trajectories.csv": ("trends", PHASE_NAMES[5]),
    "trends.csv": ("trends", PHASE_NAMES[5]),
    "correlations.csv": ("trends", PHASE_NAMES[5]),
    "forecasts.csv": ("trends", PHASE_NAMES[5]),
}


def format_number(value) -> str:
    """Shortest round-trip text for a number, shared by every export."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def phase_timestamp() -> str:
    """ISO timestamp from SOURCE_DATE_EPOCH, defaulting to epoch zero."""
    raw = os.environ.get("SOURCE_DATE_EPOCH", "").strip()
    if raw:
        try:
            epoch = int(raw)
        except ValueError:
            raise ValueError(
                f"SOURCE_DATE_EPOCH must be an integer, got {raw!r}"
            ) from None
    else:
        epoch = 0
    moment = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def digest_files(paths) -> str:
    """Stable short digest of file contents, keyed by base name."""
    entries = sorted((Path(p) for p in paths), key=lambda p: p.name)
    h = hashlib.sha256()
    for path in entries:
        h.update(path.name.encode("utf-8"))
        h.update(b"\x00")
        h.update(path.read_bytes())
        h.update(b"\x00")
    return h.hexdigest()[:12]


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def atomic_copy(src, dst) -> None:
    atomic_write_text(dst, Path(src).read_text(encoding="utf-8"))


# --------------------------------------------------------------- phase log


@dataclass(frozen=True)
class PhaseEntry:
    phase: int
    name: str
    crisp_dm: str
    timestamp: str
    inputs_digest: str
    decisions: str
    go: bool
    back_transition: str | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "name": self.name,
            "crisp_dm": self.crisp_dm,
            "timestamp": self.timestamp,
            "inputs_digest": self.inputs_digest,
            "decisions": self.decisions,
            "go": self.go,
            "back_transition": self.back_transition,
            "details": self.details,
        }


class PhaseLog:
    """Append-only record of phase outcomes, one entry per executed step."""

    def __init__(self, entries=None):
        self.entries: list[PhaseEntry] = list(entries) if entries else []

    def append(
        self,
        phase: int,
        decisions: str,
        *,
        go: bool = True,
        inputs_digest: str = "",
        back_transition: str | None = None,
        details: dict | None = None,
    ) -> PhaseEntry:
        if phase not in PHASE_NAMES:
            raise ValueError(f"phase must be 1..6, got {phase}")
        allowed = BACK_TRANSITIONS.get(phase)
        allowed_name = PHASE_NAMES[allowed] if allowed is not None else None
        if back_transition is not None and back_transition != allowed_name:
            raise ValueError(
                f"phase {phase} may only fall back to {allowed_name!r},"
                f" got {back_transition!r}"
            )
        if not go:
            if allowed_name is None:
                raise ValueError(f"phase {phase} has no fallback target for a no-go")
            back_transition = allowed_name
        entry = PhaseEntry(
            phase=phase,
            name=PHASE_NAMES[phase],
            crisp_dm=CRISP_DM_NAMES[phase],
            timestamp=phase_timestamp(),
            inputs_digest=inputs_digest,
            decisions=decisions,
            go=go,
            back_transition=back_transition,
            details=dict(details) if details else {},
        )
        self.entries.append(entry)
        return entry

    def for_phase(self, phase: int) -> list[PhaseEntry]:
        return [e for e in self.entries if e.phase == phase]

    def to_dict(self) -> dict:
        return {
            "format": "ideaminer-phaselog/1",
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PhaseLog":
        if raw.get("format") != "ideaminer-phaselog/1":
            raise ValueError(f"unsupported phase log format: {raw.get('format')!r}")
        entries = [
            PhaseEntry(
                phase=e["phase"],
                name=e["name"],
                crisp_dm=e["crisp_dm"],
                timestamp=e["timestamp"],
                inputs_digest=e["inputs_digest"],
                decisions=e["decisions"],
                go=e["go"],
                back_transition=e.get("back_transition"),
                details=e.get("details", {}),
            )
            for e in raw["entries"]
        ]
        return cls(entries)

    def save(self, path) -> None:
        atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "PhaseLog":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ------------------------------------------------------------ topic labels


@dataclass(frozen=True)
class TopicLabel:
    topic: int
    label: str
    source: str  # "user" or "default"


def load_label_file(path) -> dict[int, str]:
    """Parse "index<TAB>label" lines; '#' starts a comment."""
    labels: dict[int, str] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split("\t", 1)
        if len(parts) != 2 or not parts[0].strip().isdigit():
            raise ValueError(f"{path}:{lineno}: expected 'index<TAB>label'")
        labels[int(parts[0].strip())] = parts[1].strip()
    return labels


def load_acronym_table(path) -> dict[str, str]:
    table: dict[str, str] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split("\t", 1)
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"{path}:{lineno}: expected 'acronym<TAB>expansion'")
        table[parts[0].strip()] = parts[1].strip()
    return table


def _expand_acronyms(text: str, table: dict[str, str]) -> str:
    for acronym in sorted(table):
        pattern = r"\b" + re.escape(acronym) + r"\b"
        text = re.sub(pattern, table[acronym], text)
    return text


def label_topics(
    model,
    labels_file=None,
    acronyms_file=None,
    top_n: int = 3,
) -> list[TopicLabel]:
    """One label per topic: analyst labels win, defaults fill the rest.

    The default label joins the topic's strongest terms at the final time
    slice with "/". Labeling is analyst work; the machine only proposes.
    """
    user_labels = load_label_file(labels_file) if labels_file else {}
    acronyms = load_acronym_table(acronyms_file) if acronyms_file else {}
    n_topics = model.n_topics
    for index in user_labels:
        if not 0 <= index < n_topics:
            raise ValueError(
                f"labels file references topic {index}, model has {n_topics} topics"
            )
    final_slice = model.n_slices_ - 1
    out = []
    for k in range(n_topics):
        if k in user_labels:
            label, source = user_labels[k], "user"
        else:
            ranked = model.top_terms_at_slice(k, final_slice, top_n)
            label, source = "/".join(term for term, _ in ranked), "default"
        if acronyms:
            label = _expand_acronyms(label, acronyms)
        out.append(TopicLabel(topic=k, label=label, source=source))
    return out


# --------------------------------------------------------- idea candidates


@dataclass(frozen=True)
class IdeaCandidate:
    topic: int
    terms: tuple
    evidence: dict
    prompt: str
    checklist: dict

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "terms": list(self.terms),
            "evidence": self.evidence,
            "prompt": self.prompt,
            "checklist": self.checklist,
        }


def _fresh_checklist() -> dict:
    return {key: "unscored" for key in CHECKLIST_KEYS}


def generate_idea_candidates(
    trend_rows,
    correlation_rows,
    labels: dict[int, str],
    min_r: float = DEFAULT_MIN_R,
    alpha_level: float = DEFAULT_ALPHA_LEVEL,
) -> list[IdeaCandidate]:
    """Mechanical idea signals for analysts to screen, never auto-scored.

    A term whose slope is positive with p below ``alpha_level`` yields a
    single-term candidate. A correlated pair with |r| at or above ``min_r``,
    p below ``alpha_level``, and at least one rising member yields a pair
    candidate. Each carries an unscored screening checklist.

    Row values arrive as strings from the CSV exports; the strings are kept
    verbatim in the evidence so the rendered document never reformats a
    number.
    """
    if not 0.0 < alpha_level < 1.0:
        raise ValueError("alpha_level must lie strictly between 0 and 1")
    if min_r < 0.0:
        raise ValueError("min_r must be non-negative")
    rising: dict[int, dict[str, dict]] = {}
    for row in trend_rows:
        topic = int(row["topic"])
        if float(row["slope"]) > 0.0 and float(row["p_value"]) < alpha_level:
            rising.setdefault(topic, {})[row["term"]] = row
    candidates: list[IdeaCandidate] = []
    for topic in sorted(rising):
        label = labels.get(topic, f"topic {topic}")
        for term in sorted(rising[topic]):
            row = rising[topic][term]
            candidates.append(
                IdeaCandidate(
                    topic=topic,
                    terms=(term,),
                    evidence={
                        "classification": row.get("classification", "increasing"),
                        "slope": row["slope"],
                        "p_value": row["p_value"],
                    },
                    prompt=f"Rising attention to {term} in {label}.",
                    checklist=_fresh_checklist(),
                )
            )
    pair_rows = sorted(
        correlation_rows,
        key=lambda r: (int(r["topic"]), r["term_a"], r["term_b"]),
    )
    for row in pair_rows:
        topic = int(row["topic"])
        if abs(float(row["r"])) < min_r or float(row["p_value"]) >= alpha_level:
            continue
        members = rising.get(topic, {})
        risers = [t for t in (row["term_a"], row["term_b"]) if t in members]
        if not risers:
            continue
        label = labels.get(topic, f"topic {topic}")
        term_a, term_b = row["term_a"], row["term_b"]
        candidates.append(
            IdeaCandidate(
                topic=topic,
                terms=(term_a, term_b),
                evidence={
                    "r": row["r"],
                    "p_value": row["p_value"],
                    "rising_members": risers,
                },
                prompt=(
                    f"Rising attention to {' and '.join(risers)} in {label}:"
                    f" consider solutions combining {term_a} and {term_b}."
                ),
                checklist=_fresh_checklist(),
            )
        )
    return candidates


# ------------------------------------------------------------- rendering


def _read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows as raw cell strings."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        return [], []
    return rows[0], rows[1:]


def _md_escape(cell: str) -> str:
    return cell.replace("|", "\\|")


def _md_table(header, rows) -> list[str]:
    lines = ["| " + " | ".join(_md_escape(c) for c in header) + " |"]
    lines.append("|" + " --- |" * len(header))
    for row in rows:
        lines.append("| " + " | ".join(_md_escape(c) for c in row) + " |")
    return lines


def _rows_to_dicts(header, rows) -> list[dict]:
    return [dict(zip(header, row)) for row in rows]


def require_artifacts(artifact_dir, names) -> None:
    """Raise a targeted error for the first missing upstream artifact."""
    artifact_dir = Path(artifact_dir)
    for name in names:
        if not (artifact_dir / name).exists():
            subcommand, phase_name = ARTIFACT_PRODUCERS[name]
            raise MissingArtifactError(
                f"missing artifact {name!r} in {artifact_dir};"
                f" run '{subcommand}' first"
                f" (phase: {phase_name})",
                subcommand=subcommand,
                phase_name=phase_name,
            )


_LIMITATIONS = (
    "Perplexity is computed on the training corpus from point estimates"
    " and is labeled in-sample; no held-out protocol is applied.",
    "Topic coherence is the UMass co-occurrence measure computed on the"
    " modeled corpus itself, not a sliding-window measure over an external"
    " reference corpus.",
    "Trend classification rests on ordinary least squares over yearly"
    " probabilities, which assumes roughly linear drift and independent"
    " residuals; forecasts are extrapolations and clamped copies are"
    " flagged rather than hidden.",
    "Idea candidates are mechanical signals. Screening the checklist"
    " (novelty, necessity, usability, usefulness, technical, market,"
    " financial, social) is analyst work and is left unscored.",
)


def render_report(
    artifact_dir,
    phase_log: PhaseLog,
    *,
    config_echo: dict | None = None,
    labels_file=None,
    acronyms_file=None,
    min_r: float = DEFAULT_MIN_R,
    alpha_level: float = DEFAULT_ALPHA_LEVEL,
    top_terms: int = 10,
    max_table_rows: int = 25,
) -> Path:
    """Assemble the report bundle from the accumulated artifacts.

    Returns the bundle directory (``<artifact_dir>/report``). The caller is
    responsible for having appended the reporting phase's log entry first.
    """
    from .dtm import DynamicTopicModel

    artifact_dir = Path(artifact_dir)
    require_artifacts(artifact_dir, list(ARTIFACT_PRODUCERS))

    model = DynamicTopicModel.load(artifact_dir / "dtm_model.json")
    labels = label_topics(model, labels_file, acronyms_file)
    label_map = {tl.topic: tl.label for tl in labels}

    csv_names = (
        "frequency.csv",
        "coherence_curve.csv",
        "trajectories.csv",
        "trends.csv",
        "correlations.csv",
        "forecasts.csv",
    )
    tables = {name: _read_csv_rows(artifact_dir / name) for name in csv_names}
    trend_dicts = _rows_to_dicts(*tables["trends.csv"])
    corr_dicts = _rows_to_dicts(*tables["correlations.csv"])
    candidates = generate_idea_candidates(
        trend_dicts, corr_dicts, label_map, min_r=min_r, alpha_level=alpha_level
    )

    ingest_report = json.loads(
        (artifact_dir / "ingest_report.json").read_text(encoding="utf-8")
    )
    preprocess_report = json.loads(
        (artifact_dir / "preprocess_report.json").read_text(encoding="utf-8")
    )
    select_k = json.loads((artifact_dir / "select_k.json").read_text(encoding="utf-8"))

    top_terms_by_topic = {
        k: {
            str(model.years_[t]): [
                term for term, _ in model.top_terms_at_slice(k, t, top_terms)
            ]
            for t in range(model.n_slices_)
        }
        for k in range(model.n_topics)
    }

    bundle_dir = artifact_dir / "report"
    csv_dir = bundle_dir / "csv"
    csv_dir.mkdir(parents=True, exist_ok=True)

    lines: list[str] = []
    out = lines.append
    out("# Idea Mining Report")
    out("")
    out("Pipeline phases and their classic data-mining counterparts:")
    out("")
    phase_rows = []
    for num, name, counterpart in PHASES:
        entries = phase_log.for_phase(num)
        if entries:
            status = "go" if entries[-1].go else "no-go"
            stamp = entries[-1].timestamp
        else:
            status, stamp = "not run", ""
        phase_rows.append([str(num), name, counterpart, status, stamp])
    lines.extend(
        _md_table(["Phase", "Name", "Counterpart", "Status", "Timestamp"], phase_rows)
    )
    out("")

    def phase_heading(num: int) -> None:
        out(f"## Phase {num}: {PHASE_NAMES[num]} ({CRISP_DM_NAMES[num]})")
        out("")
        for entry in phase_log.for_phase(num):
            marker = "go" if entry.go else "no-go"
            out(f"- [{marker}] {entry.timestamp} — {entry.decisions}")
            if entry.back_transition:
                out(f"  - fallback option: {entry.back_transition}")
        if not phase_log.for_phase(num):
            out("- no log entry recorded for this phase")
        out("")

    def csv_section(title: str, name: str) -> None:
        header, rows = tables[name]
        out(f"### {title}")
        out("")
        shown = rows[:max_table_rows]
        lines.extend(_md_table(header, shown))
        if len(rows) > len(shown):
            out("")
            out(f"({len(rows) - len(shown)} more rows in csv/{name})")
        out("")

    phase_heading(1)

    phase_heading(2)

    phase_heading(3)
    csv_section("Most frequent terms", "frequency.csv")

    phase_heading(4)
    csv_section("Coherence by topic count", "coherence_curve.csv")
    out(f"Selected topic count: {select_k['best_k']}")
    out("")
    for k in range(model.n_topics):
        out(f"### Topic {k}: {label_map[k]}")
        out("")
        years = [str(y) for y in model.years_]
        grid_rows = []
        for rank in range(top_terms):
            row = [str(rank + 1)]
            for year in years:
                terms = top_terms_by_topic[k][year]
                row.append(terms[rank] if rank < len(terms) else "")
            grid_rows.append(row)
        lines.extend(_md_table(["Rank"] + years, grid_rows))
        out("")

    phase_heading(5)
    csv_section("Term trend classification", "trends.csv")
    csv_section("Forecasts", "forecasts.csv")
    csv_section("Term correlations", "correlations.csv")
    csv_section("Term trajectories", "trajectories.csv")

    phase_heading(6)
    out("### Topic labels")
    out("")
    lines.extend(
        _md_table(
            ["Topic", "Label", "Source"],
            [[str(tl.topic), tl.label, tl.source] for tl in labels],
        )
    )
    out("")
    out("Edit report/labels.txt and rerun the reporting step to rename topics.")
    out("")
    out("### Idea candidates")
    out("")
    if not candidates:
        out("No idea candidates met the thresholds"
            f" (|r| >= {format_number(min_r)}, p < {format_number(alpha_level)}).")
        out("")
    for i, cand in enumerate(candidates, start=1):
        out(f"{i}. {cand.prompt}")
        evidence = ", ".join(
            f"{key}={value}" for key, value in sorted(cand.evidence.items())
        )
        out(f"   - evidence: {evidence}")
        out(f"   - checklist: {', '.join(CHECKLIST_KEYS)} — all unscored")
    if candidates:
        out("")
    out("### Limitations")
    out("")
    for note in _LIMITATIONS:
        out(f"- {note}")
    out("")

    report_md = "\n".join(lines)

    index = {
        "format": "ideaminer-report/1",
        "artifacts": {
            "report": "report.md",
            "phase_log": "phase_log.json",
            "labels": "labels.txt",
            "csv": {name: f"csv/{name}" for name in csv_names},
        },
        "config": config_echo or {},
        "thresholds": {
            "min_r": min_r,
            "alpha_level": alpha_level,
            "top_terms": top_terms,
        },
        "selected_k": select_k["best_k"],
        "years": model.years_,
        "labels": [
            {"topic": tl.topic, "label": tl.label, "source": tl.source}
            for tl in labels
        ],
        "top_terms_by_topic": {
            str(k): top_terms_by_topic[k] for k in sorted(top_terms_by_topic)
        },
        "idea_candidates": [c.to_dict() for c in candidates],
        "checklist_keys": list(CHECKLIST_KEYS),
        "ingest": ingest_report,
        "preprocess": preprocess_report,
        "limitations": list(_LIMITATIONS),
    }

    atomic_write_text(bundle_dir / "report.md", report_md + "\n")
    atomic_write_json(bundle_dir / "report.json", index)
    for name in csv_names:
        atomic_copy(artifact_dir / name, csv_dir / name)
    phase_log.save(bundle_dir / "phase_log.json")
    labels_text = "".join(f"{tl.topic}\t{tl.label}\n" for tl in labels)
    atomic_write_text(bundle_dir / "labels.txt", labels_text)
    return bundle_dir
