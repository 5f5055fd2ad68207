"""Exception types shared across the package."""


class TenregError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(TenregError):
    pass


class InvalidAxes(TenregError):
    pass


class ZeroTensor(TenregError):
    pass


class UnsupportedKind(TenregError):
    pass


class NoClosedFormProx(TenregError):
    pass


class UnmatchedPair(TenregError):
    pass


class InfeasibleClass(TenregError):
    pass


class BadCovarianceFactor(TenregError):
    pass


class UnstableModel(TenregError):
    pass


class SvdFailure(TenregError):
    pass


class BudgetExhausted(TenregError):
    """Greedy packing ran out of candidate draws.

    Carries the partial set so callers can inspect what was achieved.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ValidationError(TenregError):
    """Bad user-supplied configuration (CLI exit code 2)."""
