"""Exception hierarchy for the upme package."""

from __future__ import annotations


class UpmeError(Exception):
    """Base class for all package errors."""


class DuplicateModelError(UpmeError):
    """Two pool members share a name."""


class PoolTooSmallError(UpmeError):
    """Fewer than three models: no valid (reviewer, candidate pair) exists."""


class InvalidInputError(UpmeError):
    """An argument violates a documented precondition."""


class ConfigError(UpmeError):
    """Run configuration is invalid or incomplete."""


class RefusedConfigMismatch(UpmeError):
    """Resume refused: the run directory's config hash does not match."""


class BackendError(UpmeError):
    """A model backend failed after the configured retries."""


class EmptyResponseError(BackendError):
    """Backend returned an empty completion."""


class JudgeParseError(UpmeError):
    """No verdict marker found in a judge output."""


class TemplateError(UpmeError):
    """Prompt template is malformed or a binding is missing."""


class EmbeddingError(UpmeError):
    """Embedding provider call failed."""


class ThresholdAbortError(UpmeError):
    """Too large a fraction of plan tuples failed; the run was aborted."""


class InsufficientDataError(UpmeError):
    """A computation needs more records than the transcript provides."""


class DegenerateWeightsError(UpmeError):
    """All confidence weights are zero (or zero for every relevant reviewer)."""


class DimensionError(UpmeError):
    """Vector lengths disagree."""


class NumericalError(UpmeError):
    """A non-finite value appeared during optimization.

    Carries the partial convergence trace in ``trace`` when available.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class UndefinedCorrelationError(UpmeError):
    """Correlation undefined (constant input or too few points)."""


class DegenerateTableError(UpmeError):
    """Contingency table has a zero margin; chi-square undefined."""


class MissingReferenceError(UpmeError):
    """A reference ranking is required for this weight preset."""


class AnnotationLinkError(UpmeError):
    """A human annotation references a record id absent from the transcript."""
