"""Exception types shared across the package."""


class FameqError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(FameqError):
    """A matrix expected to be Hermitian positive-definite failed to factor."""


class DegenerateDirection(FameqError):
    """A candidate equalizer row is (numerically) orthogonal to the target
    user's channel and cannot equalize that user."""


class InvalidBias(FameqError):
    """Bias factor outside (0, 1]: the variance formula does not apply."""


class ZeroVector(FameqError):
    """An all-zero vector was passed where a direction is required."""


class NonpositiveVariance(FameqError):
    """Noise-plus-interference variance must be strictly positive."""


class LengthMismatch(FameqError):
    """Input length does not match what the operation requires."""


class BudgetExceeded(FameqError):
    """Exhaustive enumeration would exceed the configured search budget."""


class ConfigError(FameqError):
    """Simulation configuration failed to parse or validate."""
