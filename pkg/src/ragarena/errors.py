"""Exception hierarchy shared by all ragarena modules."""

from __future__ import annotations


class RagArenaError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RagArenaError):
    """Bad run configuration: unknown keys, invariant violations, missing seed."""


class InvalidInputError(RagArenaError):
    """An operation was called with arguments that violate its preconditions."""


class InvalidDataError(RagArenaError):
    """Loaded or produced data violates a structural invariant (e.g. mixed dims)."""


class InvalidStateError(RagArenaError):
    """An operation requires state that is not present (e.g. missing embeddings)."""


class MissingEmbeddingError(InvalidStateError):
    """A file-backed embedding provider has no vector for the requested key."""


class ProviderError(RagArenaError):
    """A chat/embedding provider failed after exhausting retries."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class ProviderTimeoutError(ProviderError):
    """The provider did not answer within the configured timeout."""


class NoMockResponseError(ProviderError):
    """No mock rule matched the rendered prompt and no default is set."""


class ParseError(RagArenaError):
    """A completion could not be parsed into the expected record.

    Carries the raw completion text for debugging.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ScoreRangeError(ParseError):
    """A parsed judge score is outside its allowed range."""


class VariationParseError(ParseError):
    """A query-variation completion yielded fewer lines than requested."""


class QuotaInfeasibleError(InvalidInputError):
    """A sampling quota asks for more queries than the pool holds for a model."""

    def __init__(self, model: str, requested: int, available: int):
        super().__init__(
            f"quota infeasible for model {model!r}: "
            f"requested {requested}, pool holds {available}"
        )
        self.model = model
        self.requested = requested
        self.available = available


class InfeasibleScheduleError(InvalidInputError):
    """n_games_per_query exceeds the number of unique agent pairs."""


class GenerationFailedError(RagArenaError):
    """Synthetic query generation produced zero usable queries."""


class DegenerateStatisticError(RagArenaError):
    """The requested statistic is undefined for the given data (e.g. all ties)."""
