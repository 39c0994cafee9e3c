"""Flat key=value pipeline configuration.

One file drives all phases. Values layer in precedence order: built-in
defaults, then the config file, then IDEAMINER_<KEY> environment
variables, then command-line flags. The seed has no default on purpose:
reproducibility is mandatory, so a run without an explicit seed is
rejected before any work happens.

Input and table paths are resolved relative to the config file's
directory, which keeps bundled example configs portable. The output
directory resolves against the working directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError

ENV_PREFIX = "IDEAMINER_"

# key -> (default raw value or None for required-when-used, parser, help)
_SCHEMA = {
    "input_csv": ("", "str", "comma-separated CSV batches, relative to this file"),
    "field_title": ("Title", "str", "CSV column holding the record title"),
    "field_abstract": ("Abstract", "str", "CSV column holding the abstract"),
    "field_year": ("Year", "str", "CSV column holding the publication year"),
    "field_doi": ("DOI", "str", "CSV column holding the document id"),
    "field_source": ("Source title", "str", "CSV column holding the venue"),
    "from_year": ("", "int?", "first yearly slice; empty means earliest seen"),
    "to_year": ("", "int?", "last yearly slice; empty means latest seen"),
    "goals": ("", "str", "free-text needs assessment echoed into the phase log"),
    "success_criteria": ("", "str", "free-text success criteria for the phase log"),
    "mode": ("stem", "str", "token normalization: stem or lemma"),
    "stopwords_extra": ("", "path?", "extra stopword list, one term per line"),
    "lemma_table": ("", "path?", "surface<TAB>lemma table, required for mode=lemma"),
    "min_doc_count": ("100", "int", "keep terms in at least this many documents"),
    "max_doc_fraction": ("0.95", "float", "drop terms above this document fraction"),
    "bigram_min_count": ("5", "int", "minimum pair count for bigram promotion"),
    "bigram_threshold": ("10.0", "float", "minimum bigram score for promotion"),
    "k_candidates": ("2,3,4,5", "ints", "topic counts scanned by select-k"),
    "dtm_topics": ("0", "int", "topic count override; 0 uses the select-k choice"),
    "chain_variance": ("0.005", "float", "year-to-year variance of topic chains"),
    "alpha": ("0.1", "float", "symmetric document-topic prior"),
    "lda_iterations": ("1000", "int", "sampler sweeps for static proxy fits"),
    "max_em_iters": ("20", "int", "outer iteration cap for the dynamic fit"),
    "trend_top_n": ("10", "int", "terms tracked per topic in the trend phase"),
    "min_r": ("0.7", "float", "|r| floor for associated-term idea candidates"),
    "alpha_level": ("0.05", "float", "two-sided significance level"),
    "forecast_horizon": ("5", "int", "years to extrapolate beyond the last slice"),
    "report_labels": ("", "path?", "analyst topic labels, index<TAB>label"),
    "report_acronyms": ("", "path?", "acronym<TAB>expansion table for labels"),
    "out_dir": ("out", "str", "artifact directory, relative to the working dir"),
    "seed": ("", "int?", "random seed (required; reproducibility is mandatory)"),
}

_YEAR_MIN, _YEAR_MAX = 1900, 2100


@dataclass
class PipelineConfig:
    input_csv: list[Path]
    field_map: dict[str, str]
    from_year: int | None
    to_year: int | None
    goals: str
    success_criteria: str
    mode: str
    stopwords_extra: Path | None
    lemma_table: Path | None
    min_doc_count: int
    max_doc_fraction: float
    bigram_min_count: int
    bigram_threshold: float
    k_candidates: list[int]
    dtm_topics: int
    chain_variance: float
    alpha: float
    lda_iterations: int
    max_em_iters: int
    trend_top_n: int
    min_r: float
    alpha_level: float
    forecast_horizon: int
    report_labels: Path | None
    report_acronyms: Path | None
    out_dir: Path
    seed: int
    raw: dict[str, str] = field(default_factory=dict)


def default_config_text() -> str:
    """The documented defaults, in valid config-file syntax."""
    lines = ["# ideaminer configuration (key = value; '#' lines are comments)"]
    for key, (default, _, help_text) in _SCHEMA.items():
        lines.append(f"# {help_text}")
        lines.append(f"{key} = {default}")
        lines.append("")
    return "\n".join(lines)


def _parse_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _env_overrides(environ) -> dict[str, str]:
    values: dict[str, str] = {}
    for key in _SCHEMA:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            values[key] = environ[env_key]
    return values


def _to_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r} must be an integer, got {raw!r}") from None


def _to_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {raw!r}") from None


def _to_int_list(key: str, raw: str) -> list[int]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"config key {key!r} must list at least one integer")
    return [_to_int(key, p) for p in parts]


def _resolve(base: Path | None, raw: str) -> Path:
    path = Path(raw)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def load_config(
    config_path=None,
    cli_overrides: dict | None = None,
    environ=None,
) -> PipelineConfig:
    """Layer defaults, file, environment, and CLI values, then validate."""
    environ = os.environ if environ is None else environ
    raw = {key: default for key, (default, _, _) in _SCHEMA.items()}
    base_dir: Path | None = None
    if config_path is not None:
        config_path = Path(config_path)
        base_dir = config_path.parent
        raw.update(_parse_file(config_path))
    raw.update(_env_overrides(environ))
    for key, value in (cli_overrides or {}).items():
        if value is None:
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        raw[key] = str(value)

    if not raw["seed"].strip():
        raise ConfigError(
            "seed is required: set 'seed' in the config file,"
            f" {ENV_PREFIX}SEED, or --seed"
        )

    def opt_int(key: str) -> int | None:
        return _to_int(key, raw[key]) if raw[key].strip() else None

    def opt_path(key: str) -> Path | None:
        return _resolve(base_dir, raw[key]) if raw[key].strip() else None

    inputs = [
        _resolve(base_dir, part.strip())
        for part in raw["input_csv"].split(",")
        if part.strip()
    ]
    field_map = {
        "title": raw["field_title"],
        "abstract": raw["field_abstract"],
        "year": raw["field_year"],
        "doi": raw["field_doi"],
        "source": raw["field_source"],
    }
    cfg = PipelineConfig(
        input_csv=inputs,
        field_map=field_map,
        from_year=opt_int("from_year"),
        to_year=opt_int("to_year"),
        goals=raw["goals"],
        success_criteria=raw["success_criteria"],
        mode=raw["mode"],
        stopwords_extra=opt_path("stopwords_extra"),
        lemma_table=opt_path("lemma_table"),
        min_doc_count=_to_int("min_doc_count", raw["min_doc_count"]),
        max_doc_fraction=_to_float("max_doc_fraction", raw["max_doc_fraction"]),
        bigram_min_count=_to_int("bigram_min_count", raw["bigram_min_count"]),
        bigram_threshold=_to_float("bigram_threshold", raw["bigram_threshold"]),
        k_candidates=_to_int_list("k_candidates", raw["k_candidates"]),
        dtm_topics=_to_int("dtm_topics", raw["dtm_topics"]),
        chain_variance=_to_float("chain_variance", raw["chain_variance"]),
        alpha=_to_float("alpha", raw["alpha"]),
        lda_iterations=_to_int("lda_iterations", raw["lda_iterations"]),
        max_em_iters=_to_int("max_em_iters", raw["max_em_iters"]),
        trend_top_n=_to_int("trend_top_n", raw["trend_top_n"]),
        min_r=_to_float("min_r", raw["min_r"]),
        alpha_level=_to_float("alpha_level", raw["alpha_level"]),
        forecast_horizon=_to_int("forecast_horizon", raw["forecast_horizon"]),
        report_labels=opt_path("report_labels"),
        report_acronyms=opt_path("report_acronyms"),
        out_dir=Path(raw["out_dir"]),
        seed=_to_int("seed", raw["seed"]),
        raw=dict(raw),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    def require(check: bool, message: str) -> None:
        if not check:
            raise ConfigError(message)

    require(cfg.mode in ("stem", "lemma"), "mode must be 'stem' or 'lemma'")
    require(
        cfg.mode != "lemma" or cfg.lemma_table is not None,
        "mode=lemma requires lemma_table",
    )
    require(cfg.min_doc_count >= 1, "min_doc_count must be at least 1")
    require(
        0.0 < cfg.max_doc_fraction <= 1.0, "max_doc_fraction must be in (0, 1]"
    )
    require(cfg.bigram_min_count >= 1, "bigram_min_count must be at least 1")
    require(cfg.bigram_threshold > 0.0, "bigram_threshold must be positive")
    require(
        all(k >= 2 for k in cfg.k_candidates),
        "k_candidates entries must be at least 2",
    )
    require(
        cfg.dtm_topics == 0 or cfg.dtm_topics >= 2,
        "dtm_topics must be 0 (use select-k) or at least 2",
    )
    require(cfg.chain_variance > 0.0, "chain_variance must be positive")
    require(cfg.alpha > 0.0, "alpha must be positive")
    require(cfg.lda_iterations >= 1, "lda_iterations must be at least 1")
    require(cfg.max_em_iters >= 1, "max_em_iters must be at least 1")
    require(cfg.trend_top_n >= 2, "trend_top_n must be at least 2")
    require(cfg.min_r >= 0.0, "min_r must be non-negative")
    require(0.0 < cfg.alpha_level < 1.0, "alpha_level must lie in (0, 1)")
    require(cfg.forecast_horizon >= 1, "forecast_horizon must be at least 1")
    for key, value in (("from_year", cfg.from_year), ("to_year", cfg.to_year)):
        if value is not None:
            require(
                _YEAR_MIN <= value <= _YEAR_MAX,
                f"{key} must lie in {_YEAR_MIN}..{_YEAR_MAX}",
            )
    if cfg.from_year is not None and cfg.to_year is not None:
        require(cfg.from_year <= cfg.to_year, "from_year must not exceed to_year")
