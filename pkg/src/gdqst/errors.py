"""Exception types raised across the package."""


class GdqstError(Exception):
    """Base class for all package errors."""


class ValidationError(GdqstError, ValueError):
    """Input violates a structural or physical constraint."""


class DecompositionError(GdqstError):
    """Eigendecomposition is numerically unusable.

    Carries the condition number of the eigenvector matrix so callers can
    report how close the input is to a defective matrix.
    """

    def __init__(self, message, condition=float("nan")):
        super().__init__(message)
        self.condition = condition


class MatrixExpOverflow(GdqstError, OverflowError):
    """Matrix exponential left the representable range."""


class DegenerateSpectrumError(GdqstError):
    """Eigenvalues coincide within tolerance; the instance sits in a null set."""

    def __init__(self, message, min_gap=0.0):
        super().__init__(message)
        self.min_gap = min_gap


class IllConditionedError(GdqstError):
    """A Vandermonde-type system is too ill-conditioned to trust."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class InsufficientDataError(GdqstError, ValueError):
    """A series or record is shorter than the scheme requires."""

    def __init__(self, message, required=None, given=None):
        super().__init__(message)
        self.required = required
        self.given = given


class ReconstructionFailure(GdqstError):
    """Reconstruction refused because the instance is (numerically) in a null set.

    ``flags`` names the diagnosed cause(s), ``report`` holds whatever partial
    diagnostics were computed before refusing.
    """

    def __init__(self, message, flags=None, report=None):
        super().__init__(message)
        self.flags = dict(flags or {})
        self.report = report


class PureInconsistencyError(GdqstError):
    """Data cannot be explained by any pure Gaussian state."""
