"""Exception types shared across the querychain package."""

from __future__ import annotations


class QueryChainError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(QueryChainError):
    """Invalid or incomplete engine configuration."""


class DuplicateDocIdError(QueryChainError):
    """Two corpus documents share an id."""


class EmptyCorpusError(QueryChainError):
    """An index was requested over zero documents."""


class NoMatchError(QueryChainError):
    """No document shares a term with the query; callers treat this as a
    pass-through rather than a failure of the run."""


class EmptyDocumentError(QueryChainError):
    """A reader was invoked on a document with empty text."""


class BackendUnavailableError(QueryChainError):
    """A remote backend failed, timed out, or violated its wire contract."""


class ScriptExhaustedError(QueryChainError):
    """A scripted LLM backend was asked for more generations than it holds."""


class MalformedExampleError(QueryChainError):
    """A few-shot example's chain text does not parse."""


class EmptyPathError(QueryChainError):
    """An operation requiring a non-empty correct path got an empty one."""


class RunAbortedError(QueryChainError):
    """An interaction run stopped before normal termination.

    Carries the partial tree, path, counters and feedback list accumulated
    before the abort so a partial trace can still be written.
    """

    def __init__(self, message, tree=None, path=None, counters=None, feedbacks=None, cause=None):
        super().__init__(message)
        self.tree = tree
        self.path = path
        self.counters = counters
        self.feedbacks = feedbacks if feedbacks is not None else []
        self.cause = cause


class UnparseableGenerationError(RunAbortedError):
    """Two consecutive generations for the same restart point failed to parse."""
