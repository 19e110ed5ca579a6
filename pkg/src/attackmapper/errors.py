"""Typed error hierarchy shared by every module.

Each exception class carries a machine-readable ``code`` and an HTTP status
class so the gateway can translate any domain failure into a structured API
error. A raise site may narrow the code (e.g. ``validation.empty_incident``)
but the same failure condition always maps to the same code.
"""

from __future__ import annotations

from typing import Any


class AttackMapperError(Exception):
    """Base class for all anticipated failures."""

    code = "internal"
    http_status = 500

    def __init__(self, message: str, *, code: str | None = None, detail: Any = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.detail = detail

    @property
    def message(self) -> str:
        return str(self)


class ValidationError(AttackMapperError):
    """Malformed or inconsistent input data."""

    code = "validation.invalid"
    http_status = 400


class ParseError(ValidationError):
    code = "validation.parse"


class ConflictError(ValidationError):
    """Duplicate identifier within one source."""

    code = "validation.conflict"


class ReferentialError(ValidationError):
    """A mapping points at an entity that was never declared."""

    code = "validation.reference"


class ShapeError(ValidationError):
    """Mismatched lengths or dimensions."""

    code = "validation.shape"


class DataError(ValidationError):
    """Non-finite or otherwise unusable numeric payload."""

    code = "validation.data"


class NotFoundError(AttackMapperError):
    code = "not_found"
    http_status = 404


class DomainError(AttackMapperError):
    """Input is well-formed but violates an operation's precondition."""

    code = "domain"
    http_status = 422


class BindingError(DomainError):
    """Formula identifier with no bound measure."""

    code = "domain.unbound_identifier"


class UndefinedMetricError(DomainError):
    """Metric formula divided by zero."""

    code = "domain.undefined_metric"


class EmptySequenceError(DomainError):
    code = "domain.empty_sequence"


class EmptyStoreError(DomainError):
    code = "domain.empty_store"


class InsufficientCorpusError(DomainError):
    code = "domain.insufficient_corpus"


class CoverageError(DomainError):
    """A training pair's technique has no mined hard negative."""

    code = "domain.missing_hard_negative"


class DegenerateSplitError(DomainError):
    code = "domain.degenerate_split"


class SchedulingError(DomainError):
    """A triple can never satisfy the no-duplicate batch invariant."""

    code = "domain.unschedulable_batch"


class DivergenceError(DomainError):
    """Training produced a non-finite loss."""

    code = "domain.divergence"

    def __init__(self, message: str, *, step: int | None = None, **kw: Any):
        super().__init__(message, **kw)
        self.step = step


class UndefinedCorrelationError(DomainError):
    """Correlation of a constant sequence."""

    code = "domain.undefined_correlation"
