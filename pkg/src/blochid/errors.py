"""Exception types raised across the package."""


class BlochIdError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BlochIdError, ValueError):
    pass


class NonHermitianF(BlochIdError, ValueError):
    pass


class Inconsistent(BlochIdError, ValueError):
    """Raised when ``c`` is not in the range of ``A`` (no steady state)."""


# propagation re-raises the steady-state failure under this name
SteadyStateInconsistent = Inconsistent


class ProbabilityOutOfRange(BlochIdError, ValueError):
    pass


class FitDegenerate(BlochIdError):
    """Design matrix is rank deficient at the optimum."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class FitFailed(BlochIdError):
    pass


class UnsupportedBasis(BlochIdError, ValueError):
    pass


class SingularS(BlochIdError):
    """Eigenvector matrix cannot be inverted (zero overlap with an eigenvector)."""


class ConjugacyViolation(BlochIdError):
    pass


class CaseMismatch(BlochIdError, ValueError):
    pass


class SingularC(BlochIdError):
    pass


class UnsupportedPrior(BlochIdError, ValueError):
    pass


class NoConvergence(BlochIdError):
    pass


class AmbiguousSolution(BlochIdError):
    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or []
