"""Exception types shared across the toolkit."""


class AuditError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AuditError):
    """A value violates a domain rule (bad project id, bad key, bad date range)."""


class MalformedDoiError(ValidationError):
    """A DOI failed validation. Carries the raw input for the reject trail."""

    def __init__(self, raw: str, message: str | None = None):
        super().__init__(message or f"malformed DOI: {raw!r}")
        self.raw = raw


class DataError(AuditError):
    """Fatal input problem: wrong header, duplicate registry rows, incomparable
    snapshots, conflicting annotations. These abort the run instead of going to
    the reject trail."""


class ConservationError(DataError):
    """A funnel stage's children do not add up to the stage total."""


class FetchFailedError(AuditError):
    """An API call failed after exhausting its retry budget."""

    def __init__(self, message: str, attempts: int, last_error: str | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error
