"""Exception types raised across the package."""


class AimmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AimmError, ValueError):
    pass


class SymmetryViolation(AimmError, ValueError):
    pass


class NonPositiveDefinite(AimmError, ValueError):
    pass


class TooFewPoints(AimmError, ValueError):
    pass


class SingularInput(AimmError, ValueError):
    pass


class InvalidWeight(AimmError, ValueError):
    pass


class EmptyHistory(AimmError, ValueError):
    pass


class EmptyMixture(AimmError, ValueError):
    pass


class DegenerateSeries(AimmError, ValueError):
    pass


class UnnormalizedTarget(AimmError, ValueError):
    pass


class UnsupportedDimension(AimmError, ValueError):
    pass


class ConfigError(AimmError, ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
