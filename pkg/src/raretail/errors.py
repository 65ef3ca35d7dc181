"""Exception hierarchy shared by every module."""


class RareTailError(Exception):
    """Base class for all library errors."""


class DimensionError(RareTailError, ValueError):
    pass


class NotSymmetricError(RareTailError, ValueError):
    pass


class NotPositiveDefiniteError(RareTailError, ValueError):
    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class JetError(RareTailError, ValueError):
    pass


class ProblemError(RareTailError, ValueError):
    """Invalid rare-event problem data (zero gradients, KKT violations, ...)."""


class MissingBoundsError(RareTailError, ValueError):
    pass


class ConditionFailure(RareTailError):
    """Raised in strict mode when a validity condition does not hold."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ExpansionRegimeError(RareTailError):
    """The first-order factor 1 + a1 d^2/lambda is not positive."""


class EstimationError(RareTailError):
    pass


class OracleError(RareTailError):
    """An oracle failed to converge within its budget."""


class ConfigError(RareTailError, ValueError):
    pass
