"""Exception hierarchy shared across the package."""


class EisoptError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EisoptError, ValueError):
    """An input violates a documented precondition or invariant."""


class SpectrumFormatError(EisoptError, ValueError):
    """A spectrum file could not be parsed.

    Carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SingularInformationError(EisoptError):
    """The information matrix is numerically singular or indefinite.

    Carries the smallest eigenvalue and condition number observed in the
    scaled coordinates used for the factorization.
    """

    def __init__(self, message, lambda_min=None, condition_number=None):
        super().__init__(message)
        self.lambda_min = lambda_min
        self.condition_number = condition_number


class InitializationError(EisoptError):
    """The spectrum geometry could not be segmented into HF/MF/LF regions."""


class FitError(EisoptError):
    """The least-squares solver failed irrecoverably (damping exhausted)."""


class DesignError(EisoptError):
    """The frequency-adjustment loop cannot proceed (e.g. no free candidates)."""
