"""Command-line pipeline driver.

Each subcommand executes one phase against a shared artifact directory,
checks that its upstream artifacts exist, and appends an entry to the
phase log. ``run`` executes all six in order against a fresh log. Exit
codes: 0 success, 1 fatal error, 2 quality-gate no-go (the log then names
the phase to fall back to).

Artifact writes go through a temp file plus rename, so a killed run never
leaves a half-written file that a later phase would accept. A file lock on
the artifact directory keeps concurrent runs from interleaving.
"""

from __future__ import annotations

import json
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import click
from filelock import FileLock, Timeout

from . import __version__
from .coherence import LdaFitConfig, select_k
from .config import load_config, default_config_text
from .corpus import (
    bin_time_slices,
    deduplicate,
    parse_bibliographic_csv,
    read_corpus_jsonl,
    write_corpus_jsonl,
)
from .dtm import DynamicTopicModel
from .exceptions import ConfigError, IdeaMinerError, EmptyVocabularyError, IngestError
from .preprocess import (
    BigramDetector,
    BowCorpus,
    Dictionary,
    build_dictionary,
    frequency_report,
    load_lemma_table,
    load_stopwords,
    tokenize_and_normalize,
    vectorize,
    write_frequency_csv,
)
from .report import (
    ARTIFACT_PRODUCERS,
    PhaseLog,
    atomic_write_json,
    atomic_write_text,
    digest_files,
    format_number,
    render_report,
    require_artifacts,
)
from .trends import classify_trend, correlation_matrix, method_gate, ols_forecast

# usage mistakes are fatal errors; exit 2 is reserved for quality-gate no-gos
click.exceptions.UsageError.exit_code = 1


class _NoGo(Exception):
    """Raised after a no-go entry has been written to the phase log."""


def _print_config(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(default_config_text())
    ctx.exit(0)


@click.group()
@click.version_option(version=__version__, prog_name="ideaminer")
@click.option(
    "--print-config",
    is_flag=True,
    callback=_print_config,
    expose_value=False,
    is_eager=True,
    help="Print the documented configuration defaults and exit.",
)
def main():
    """Mine rising research themes from timestamped document records.

    The pipeline runs in six phases: needs assessment, data collection,
    data preparation, modeling, evaluation, and reporting. Subcommands
    execute one phase each against a shared artifact directory; `run`
    executes them all.
    """


def _pipeline_options(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the seed.")(fn)
    fn = click.option(
        "--out", "out_dir", default=None, help="Override the artifact directory."
    )(fn)
    fn = click.option(
        "--config", "config_path", default=None, help="Key=value config file."
    )(fn)
    return fn


def _digest_text(text: str) -> str:
    import hashlib

    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _atomic(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _run_steps(config_path, out_dir, seed, steps, fresh_log=False) -> None:
    if config_path is not None and not Path(config_path).is_file():
        raise ConfigError(f"config file not found: {config_path}")
    cfg = load_config(config_path, {"out_dir": out_dir, "seed": seed})
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(out / ".lock")
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise IdeaMinerError(
            f"artifact directory {out} is locked by another run"
        ) from None
    try:
        log_path = out / "phase_log.json"
        if fresh_log or not log_path.exists():
            log = PhaseLog()
        else:
            log = PhaseLog.load(log_path)
        for step in steps:
            try:
                step(cfg, out, log)
            finally:
                log.save(log_path)
    finally:
        lock.release()


def _execute(work) -> None:
    try:
        work()
    except _NoGo as exc:
        click.echo(f"no-go: {exc}", err=True)
        sys.exit(2)
    except (IdeaMinerError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


# ----------------------------------------------------------------- phases


def _step_ingest(cfg, out: Path, log: PhaseLog) -> None:
    if not cfg.input_csv:
        raise ConfigError("input_csv is required for ingest")
    for path in cfg.input_csv:
        if not path.is_file():
            raise IngestError(f"input file not found: {path}")
    corpus, parse_report = parse_bibliographic_csv(cfg.input_csv, cfg.field_map)
    corpus, dedup_report = deduplicate(corpus)
    years = [r.year for r in corpus.records]
    from_year = cfg.from_year if cfg.from_year is not None else min(years)
    to_year = cfg.to_year if cfg.to_year is not None else max(years)
    corpus, bin_report = bin_time_slices(corpus, from_year, to_year)

    _atomic(out / "corpus.jsonl", lambda p: write_corpus_jsonl(corpus, p))
    summary = {
        "parsed": parse_report.parsed,
        "skipped": parse_report.skipped,
        "files": parse_report.files,
        "dedup": dedup_report.to_dict(),
        "records": len(corpus),
        "from_year": from_year,
        "to_year": to_year,
        "dropped_outside_range": bin_report.dropped,
        "empty_years": bin_report.empty_years,
        "years": corpus.years,
        "slice_sizes": corpus.slice_sizes(),
    }
    atomic_write_json(out / "ingest_report.json", summary)

    goals = cfg.goals or "(none recorded)"
    criteria = cfg.success_criteria or "(none recorded)"
    # out_dir says where results land, not what they are; keep it out of
    # digests so bundles written to different directories stay identical.
    params = {k: v for k, v in cfg.raw.items() if k != "out_dir"}
    log.append(
        1,
        f"goals: {goals}; success criteria: {criteria}",
        inputs_digest=_digest_text(json.dumps(params, sort_keys=True)),
        details={"goals": cfg.goals, "success_criteria": cfg.success_criteria},
    )
    decisions = (
        f"parsed {parse_report.parsed} rows from {len(cfg.input_csv)} files"
        f" ({parse_report.skipped} skipped); removed {dedup_report.total} duplicates"
        f" ({dedup_report.by_id} by id, {dedup_report.by_title_year} by title+year);"
        f" kept {len(corpus)} records over {from_year}..{to_year}"
    )
    if bin_report.empty_years:
        years_text = ", ".join(str(y) for y in bin_report.empty_years)
        decisions += f"; warning: no records for years {years_text}"
    log.append(
        2, decisions, inputs_digest=digest_files(cfg.input_csv), details=summary
    )
    click.echo(
        f"ingest: kept {len(corpus)} records over {from_year}..{to_year}"
        f" ({dedup_report.total} duplicates removed)"
    )


def _step_preprocess(cfg, out: Path, log: PhaseLog) -> None:
    require_artifacts(out, ["corpus.jsonl", "ingest_report.json"])
    meta = json.loads((out / "ingest_report.json").read_text(encoding="utf-8"))
    corpus = read_corpus_jsonl(
        out / "corpus.jsonl", (meta["from_year"], meta["to_year"])
    )
    stopwords = load_stopwords(cfg.stopwords_extra)
    lemma_table = (
        load_lemma_table(cfg.lemma_table) if cfg.mode == "lemma" else None
    )
    token_docs = []
    for year in corpus.years:
        for pos in corpus.slice_index[year]:
            rec = corpus.records[pos]
            token_docs.append(
                tokenize_and_normalize(
                    f"{rec.title} {rec.abstract}", stopwords, cfg.mode, lemma_table
                )
            )
    slice_sizes = corpus.slice_sizes()
    detector = BigramDetector(
        min_count=cfg.bigram_min_count, threshold=cfg.bigram_threshold
    ).fit(token_docs)
    token_docs = detector.transform(token_docs)
    phrases = detector.phrases_
    try:
        dictionary = build_dictionary(
            token_docs, cfg.min_doc_count, cfg.max_doc_fraction
        )
    except EmptyVocabularyError as exc:
        log.append(
            3,
            f"no-go: {exc}",
            go=False,
            inputs_digest=digest_files([out / "corpus.jsonl"]),
            details={"error": str(exc)},
        )
        raise _NoGo(f"{exc}; falling back to Data Collection and Understanding")
    bow, dropped = vectorize(token_docs, dictionary, slice_sizes)
    freq_rows = frequency_report(token_docs, top_n=100)

    _atomic(out / "dictionary.json", dictionary.save)
    _atomic(out / "frequency.csv", lambda p: write_frequency_csv(freq_rows, p))
    payload = {"format": "ideaminer-bow/1", **bow.to_dict(), "years": corpus.years}
    atomic_write_text(out / "bow.json", json.dumps(payload))
    summary = {
        "documents": bow.num_docs,
        "dropped_empty": dropped,
        "vocabulary_size": len(dictionary),
        "bigrams": len(phrases),
        "mode": cfg.mode,
        "total_tokens": bow.total_tokens(),
        "years": corpus.years,
        "slice_sizes": bow.slice_sizes,
    }
    atomic_write_json(out / "preprocess_report.json", summary)
    log.append(
        3,
        f"normalized {len(token_docs)} documents (mode={cfg.mode});"
        f" vocabulary {len(dictionary)} terms; promoted {len(phrases)} bigrams;"
        f" dropped {dropped} empty documents",
        inputs_digest=digest_files([out / "corpus.jsonl"]),
        details=summary,
    )
    click.echo(
        f"preprocess: {bow.num_docs} documents, {len(dictionary)} vocabulary terms"
    )


def _load_bow(out: Path) -> tuple[BowCorpus, list[int]]:
    raw = json.loads((out / "bow.json").read_text(encoding="utf-8"))
    if raw.get("format") != "ideaminer-bow/1":
        raise IdeaMinerError(f"unsupported bow file format: {raw.get('format')!r}")
    bow = BowCorpus.from_dict(raw)
    years = [int(y) for y in raw.get("years", range(bow.num_slices))]
    return bow, years


def _step_select_k(cfg, out: Path, log: PhaseLog) -> None:
    require_artifacts(out, ["bow.json", "dictionary.json"])
    bow, _ = _load_bow(out)
    fit_config = LdaFitConfig(alpha=cfg.alpha, iterations=cfg.lda_iterations)
    result = select_k(bow, cfg.k_candidates, fit_config, seed=cfg.seed)
    lines = ["K,coherence,perplexity"]
    for k, coherence, perp in result.curve:
        lines.append(f"{k},{format_number(coherence)},{format_number(perp)}")
    atomic_write_text(out / "coherence_curve.csv", "\n".join(lines) + "\n")
    payload = {
        "format": "ideaminer-selectk/1",
        "best_k": result.best_k,
        "curve": [
            {"k": k, "coherence": c, "perplexity": p} for k, c, p in result.curve
        ],
        "seed": cfg.seed,
    }
    atomic_write_json(out / "select_k.json", payload)
    candidates = ", ".join(str(k) for k, _, _ in result.curve)
    log.append(
        4,
        f"scanned topic counts {candidates}; most coherent: K={result.best_k}",
        inputs_digest=digest_files([out / "bow.json"]),
        details=payload,
    )
    click.echo(f"select-k: best K={result.best_k} (scanned {candidates})")


def _step_fit(cfg, out: Path, log: PhaseLog) -> None:
    require_artifacts(out, ["bow.json", "dictionary.json"])
    bow, years = _load_bow(out)
    dictionary = Dictionary.load(out / "dictionary.json")
    if cfg.dtm_topics >= 2:
        n_topics, chosen_by = cfg.dtm_topics, "config"
    else:
        require_artifacts(out, ["select_k.json"])
        chosen = json.loads((out / "select_k.json").read_text(encoding="utf-8"))
        n_topics, chosen_by = int(chosen["best_k"]), "select-k"
    model = DynamicTopicModel(
        n_topics=n_topics,
        chain_variance=cfg.chain_variance,
        alpha=cfg.alpha,
        max_em_iters=cfg.max_em_iters,
        seed=cfg.seed,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model.fit(bow, vocabulary=dictionary.id_to_term, years=years)
    messages = sorted({str(w.message) for w in caught})
    decisions = (
        f"fitted {n_topics} topic chains (chosen by {chosen_by}) over"
        f" {bow.num_slices} slices; objective evaluations: {model.n_iter_};"
        f" converged: {model.converged_}"
    )
    if messages:
        decisions += (
            "; quality warnings: " + "; ".join(messages)
            + " (option: revisit Data Preparation)"
        )
    _atomic(out / "dtm_model.json", model.save)
    log.append(
        4,
        decisions,
        back_transition="Data Preparation" if messages else None,
        inputs_digest=digest_files([out / "bow.json"]),
        details={
            "n_topics": n_topics,
            "chosen_by": chosen_by,
            "em_iterations": model.n_iter_,
            "converged": model.converged_,
            "objective_first": model.elbo_trace_[0],
            "objective_last": model.elbo_trace_[-1],
            "warnings": messages,
        },
    )
    click.echo(
        f"fit: {n_topics} topics over {bow.num_slices} slices,"
        f" converged={model.converged_}"
    )


def _step_trends(cfg, out: Path, log: PhaseLog) -> None:
    require_artifacts(out, ["dtm_model.json"])
    model = DynamicTopicModel.load(out / "dtm_model.json")
    n_slices = model.n_slices_
    gate_regression = method_gate(n_slices, "regression")
    gate_arima = method_gate(n_slices, "arima")

    traj_lines = ["topic,term,year,probability"]
    trend_lines = ["topic,term,slope,p_value,classification,r_squared"]
    # denormalized: per-term fit stats repeat on every horizon row, so the
    # file alone carries slope, both intercept forms, rse, and n
    forecast_lines = [
        "topic,term,year,value,value_clamped,clamped,"
        "slope,intercept,intercept_reindexed,rse,n"
    ]
    corr_lines = ["topic,term_a,term_b,r,p_value,n"]
    counts = {"increasing": 0, "decreasing": 0, "flat": 0}
    skipped_constant: dict[str, list[str]] = {}
    correlation_notes: list[str] = []
    n_terms = 0
    for k in range(model.n_topics):
        candidates = sorted(
            {
                str(term)
                for t in range(n_slices)
                for term, _ in model.top_terms_at_slice(k, t, cfg.trend_top_n)
            }
        )
        n_terms += len(candidates)
        for term in candidates:
            traj = model.term_trajectory(k, term)
            for year, value in zip(traj.years, traj.values):
                traj_lines.append(f"{k},{term},{year},{format_number(value)}")
            if gate_regression.permitted:
                fc = ols_forecast(traj, cfg.forecast_horizon)
                label = classify_trend(fc, cfg.alpha_level)
                counts[label] += 1
                trend_lines.append(
                    f"{k},{term},{format_number(fc.slope)},"
                    f"{format_number(fc.slope_p_value)},{label},"
                    f"{format_number(fc.r_squared)}"
                )
                # intercept re-expressed at the first slice year, where it
                # reads as a probability instead of a year-zero extrapolation
                reindexed = fc.intercept + fc.slope * traj.years[0]
                for (year, value), (_, clamped) in zip(
                    fc.horizon, fc.horizon_clamped
                ):
                    flag = "true" if value != clamped else "false"
                    forecast_lines.append(
                        f"{k},{term},{year},{format_number(value)},"
                        f"{format_number(clamped)},{flag},"
                        f"{format_number(fc.slope)},{format_number(fc.intercept)},"
                        f"{format_number(reindexed)},{format_number(fc.rse)},{fc.n}"
                    )
        if n_slices >= 3:
            try:
                matrix = correlation_matrix(model, k, cfg.trend_top_n)
            except ValueError as exc:
                correlation_notes.append(f"topic {k}: {exc}")
            else:
                if matrix.skipped_constant:
                    skipped_constant[str(k)] = matrix.skipped_constant
                for res in matrix.results:
                    corr_lines.append(
                        f"{k},{res.term_a},{res.term_b},{format_number(res.r)},"
                        f"{format_number(res.p_value)},{res.n}"
                    )
        else:
            correlation_notes.append(
                f"topic {k}: correlation needs at least 3 time slices, got {n_slices}"
            )

    atomic_write_text(out / "trajectories.csv", "\n".join(traj_lines) + "\n")
    atomic_write_text(out / "trends.csv", "\n".join(trend_lines) + "\n")
    atomic_write_text(out / "forecasts.csv", "\n".join(forecast_lines) + "\n")
    atomic_write_text(out / "correlations.csv", "\n".join(corr_lines) + "\n")

    decisions = (
        f"tracked {n_terms} terms across {model.n_topics} topics;"
        f" {counts['increasing']} increasing, {counts['decreasing']} decreasing,"
        f" {counts['flat']} flat at alpha={format_number(cfg.alpha_level)}"
    )
    if not gate_regression.permitted:
        decisions += f"; {gate_regression.reason}"
    if correlation_notes:
        decisions += "; " + "; ".join(correlation_notes)
    log.append(
        5,
        decisions,
        inputs_digest=digest_files([out / "dtm_model.json"]),
        details={
            "trend_counts": counts,
            "terms_tracked": n_terms,
            "gate_regression": asdict(gate_regression),
            "gate_arima": asdict(gate_arima),
            "skipped_constant": skipped_constant,
            "correlation_notes": correlation_notes,
            "alpha_level": cfg.alpha_level,
            "forecast_horizon": cfg.forecast_horizon,
        },
    )
    click.echo(
        f"trends: {n_terms} terms tracked; {counts['increasing']} increasing,"
        f" {counts['decreasing']} decreasing, {counts['flat']} flat"
    )


def _step_report(cfg, out: Path, log: PhaseLog) -> None:
    artifact_names = list(ARTIFACT_PRODUCERS)
    require_artifacts(out, artifact_names)
    log.append(
        6,
        "assembled report bundle: report.md, report.json, csv exports,"
        " phase log, and labels template for analyst screening",
        inputs_digest=digest_files([out / name for name in artifact_names]),
        details={"bundle": "report"},
    )
    bundle = render_report(
        out,
        log,
        config_echo={k: v for k, v in cfg.raw.items() if k != "out_dir"},
        labels_file=cfg.report_labels,
        acronyms_file=cfg.report_acronyms,
        min_r=cfg.min_r,
        alpha_level=cfg.alpha_level,
        top_terms=cfg.trend_top_n,
    )
    click.echo(f"report: bundle written to {bundle}")


_ALL_STEPS = (
    _step_ingest,
    _step_preprocess,
    _step_select_k,
    _step_fit,
    _step_trends,
    _step_report,
)


@main.command()
@_pipeline_options
def ingest(config_path, out_dir, seed):
    """Collect, deduplicate, and bin records into yearly slices."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_ingest]))


@main.command()
@_pipeline_options
def preprocess(config_path, out_dir, seed):
    """Tokenize, normalize, promote bigrams, and build the vocabulary."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_preprocess]))


@main.command(name="select-k")
@_pipeline_options
def select_k_cmd(config_path, out_dir, seed):
    """Scan candidate topic counts and keep the most coherent."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_select_k]))


@main.command()
@_pipeline_options
def fit(config_path, out_dir, seed):
    """Fit topic chains over the yearly slices."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_fit]))


@main.command()
@_pipeline_options
def trends(config_path, out_dir, seed):
    """Extract term trajectories, classify trends, and correlate terms."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_trends]))


@main.command()
@_pipeline_options
def report(config_path, out_dir, seed):
    """Assemble the report bundle for analyst review."""
    _execute(lambda: _run_steps(config_path, out_dir, seed, [_step_report]))


@main.command()
@_pipeline_options
def run(config_path, out_dir, seed):
    """Execute all six phases in order against a fresh phase log."""
    _execute(
        lambda: _run_steps(config_path, out_dir, seed, list(_ALL_STEPS), fresh_log=True)
    )


if __name__ == "__main__":
    main()
