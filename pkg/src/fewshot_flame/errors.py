"""Exception types raised across the package."""


class FewShotError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FewShotError, ValueError):
    """Invalid or inconsistent configuration (architecture tag, class counts, ...)."""


class StructureError(FewShotError):
    """Dataset directory layout does not match expectations."""


class CapacityError(FewShotError):
    """Not enough samples to satisfy a request."""


class SamplingError(FewShotError):
    """A sampler cannot produce a valid draw (e.g. no negative class)."""


class NumericError(FewShotError, ArithmeticError):
    """Non-finite values where finite ones are required."""
