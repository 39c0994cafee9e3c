"""Exception types shared across the pipeline."""


class IdeaMinerError(Exception):
    """Base class for pipeline errors."""


class IngestError(IdeaMinerError):
    """Raised when bibliographic input cannot be parsed or sliced."""


class PreprocessError(IdeaMinerError):
    """Raised when tokenization or vectorization cannot proceed."""


class EmptyVocabularyError(PreprocessError):
    """Raised when dictionary filtering leaves no terms.

    This is a quality gate, not a programming error: the caller is expected
    to collect more data or lower ``min_doc_count``.
    """


class ConfigError(IdeaMinerError):
    """Raised when a run configuration is missing or out of range."""


class MissingArtifactError(IdeaMinerError):
    """Raised when a phase is invoked before its upstream artifacts exist."""

    def __init__(self, message: str, subcommand: str = "", phase_name: str = ""):
        super().__init__(message)
        self.subcommand = subcommand
        self.phase_name = phase_name
