"""Exception types shared across the engine."""


class LitragError(Exception):
    """Base class for all engine errors."""


class EmptyDocument(LitragError):
    """Document text normalized to the empty string."""


class ZeroVector(LitragError):
    """Vector norm too small to normalize; must not enter the index."""


class DimensionMismatch(LitragError):
    """Vector width differs from the configured dimension."""


class DuplicateChunk(LitragError):
    """A chunk with this id is already present in the index."""


class CorruptSnapshot(LitragError):
    """Snapshot file failed structural or checksum validation."""


class EndpointUnavailable(LitragError):
    """External endpoint unreachable after bounded retries."""


class ModelError(LitragError):
    """Chat endpoint answered with an error object instead of a completion."""


class BudgetTooSmall(LitragError):
    """System text plus question alone exceed the prompt token budget."""


class MissingMetadata(LitragError):
    """A retrieval hit's doc_id resolves to no stored document metadata."""


class SourceUnavailable(LitragError):
    """Every request to a harvest source failed."""
