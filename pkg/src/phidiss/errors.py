"""Exception types shared across the package."""


class PhidissError(Exception):
    """Base class for all package-specific errors."""


class MalformedSpecError(PhidissError):
    """A weight-function description is structurally invalid (e.g. phi <= 0)."""


class InsufficientDataError(PhidissError):
    """Tabulated data too sparse to interpolate or validate."""


class NumericFailureError(PhidissError):
    """A root finder or quadrature failed to converge.

    Carries the last bracket / the two conflicting estimates so callers can
    refine or report.
    """

    def __init__(self, message, *, bracket=None, estimates=None):
        super().__init__(message)
        self.bracket = bracket
        self.estimates = estimates


class InvariantViolationError(PhidissError):
    """Sampled data contradicts a structural invariant (e.g. monotone Lambda)."""


class PreconditionError(PhidissError):
    """An operation was called with inputs outside its contract."""


class ShapeError(PreconditionError):
    """Matrix / vector dimensions do not agree."""


class EmptyDomainError(PhidissError):
    """A check was requested over a field with no sample points."""


class UnsupportedRegimeError(PhidissError):
    """The requested operation needs sup Lambda^2 < 1 and the profile fails it."""


class FallbackRequired(PhidissError):
    """The eigenvalue fast path does not apply; caller should use the general path."""


class FieldFormatError(PhidissError):
    """A coefficient-field file failed to parse."""

    def __init__(self, message, *, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class QuadratureError(NumericFailureError):
    """Two quadrature refinement levels disagree beyond tolerance."""
