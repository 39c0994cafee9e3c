"""Idea mining over timestamped document collections.

Ingest bibliographic CSV exports, normalize the text, fit topic chains
across yearly slices, test term trends for significance, and assemble a
report bundle from which analysts screen candidate ideas.
"""

__version__ = "0.1.0"

from .exceptions import (
    ConfigError,
    EmptyVocabularyError,
    IdeaMinerError,
    IngestError,
    MissingArtifactError,
    PreprocessError,
)
from .corpus import (
    BiblioRecord,
    Corpus,
    bin_time_slices,
    deduplicate,
    normalize_title,
    parse_bibliographic_csv,
    read_corpus_jsonl,
    write_corpus_jsonl,
)
from .stem import porter_stem, stable_stem
from .preprocess import (
    BigramDetector,
    BowCorpus,
    Dictionary,
    build_dictionary,
    detect_bigrams,
    frequency_report,
    load_lemma_table,
    load_stopwords,
    tokenize,
    tokenize_and_normalize,
    vectorize,
)
from .lda import GibbsLda, fit_lda, perplexity, rank_terms
from .dtm import DynamicTopicModel, fit_dtm
from .coherence import (
    CoherenceResult,
    LdaFitConfig,
    SelectKResult,
    select_k,
    umass_coherence,
)
from .significance import regularized_incomplete_beta, student_t_two_sided_p
from .trends import (
    CorrelationResult,
    ForecastResult,
    MethodDecision,
    TermTrajectory,
    classify_trend,
    correlation_matrix,
    method_gate,
    ols_forecast,
    pearson_correlation,
)
from .report import (
    CHECKLIST_KEYS,
    IdeaCandidate,
    PhaseLog,
    TopicLabel,
    generate_idea_candidates,
    label_topics,
    render_report,
)
from .config import PipelineConfig, default_config_text, load_config

__all__ = [
    "__version__",
    "BiblioRecord",
    "BigramDetector",
    "BowCorpus",
    "CHECKLIST_KEYS",
    "CoherenceResult",
    "ConfigError",
    "Corpus",
    "CorrelationResult",
    "Dictionary",
    "DynamicTopicModel",
    "EmptyVocabularyError",
    "ForecastResult",
    "GibbsLda",
    "IdeaCandidate",
    "IdeaMinerError",
    "IngestError",
    "LdaFitConfig",
    "MethodDecision",
    "MissingArtifactError",
    "PhaseLog",
    "PipelineConfig",
    "PreprocessError",
    "SelectKResult",
    "TermTrajectory",
    "TopicLabel",
    "bin_time_slices",
    "build_dictionary",
    "classify_trend",
    "correlation_matrix",
    "deduplicate",
    "default_config_text",
    "detect_bigrams",
    "fit_dtm",
    "fit_lda",
    "frequency_report",
    "generate_idea_candidates",
    "label_topics",
    "load_config",
    "load_lemma_table",
    "load_stopwords",
    "method_gate",
    "normalize_title",
    "ols_forecast",
    "parse_bibliographic_csv",
    "pearson_correlation",
    "perplexity",
    "porter_stem",
    "stable_stem",
    "rank_terms",
    "read_corpus_jsonl",
    "regularized_incomplete_beta",
    "render_report",
    "select_k",
    "student_t_two_sided_p",
    "tokenize",
    "tokenize_and_normalize",
    "umass_coherence",
    "vectorize",
    "write_corpus_jsonl",
]
