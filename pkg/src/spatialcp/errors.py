"""Exception hierarchy shared across the package."""


class SpatialCPError(Exception):
    """Base class for all package errors."""


class EmptyDataset(SpatialCPError, ValueError):
    pass


class BadRatios(SpatialCPError, ValueError):
    pass


class TooFewPoints(SpatialCPError, ValueError):
    pass


class EmptyInput(SpatialCPError, ValueError):
    pass


class DegenerateExtent(SpatialCPError, ValueError):
    pass


class DomainError(SpatialCPError, ValueError):
    pass


class CholeskyFailure(SpatialCPError, ArithmeticError):
    pass


class EmptyTrainSet(SpatialCPError, ValueError):
    pass


class DimensionMismatch(SpatialCPError, ValueError):
    pass


class TooFewPairs(SpatialCPError, ValueError):
    pass


class LengthMismatch(SpatialCPError, ValueError):
    pass


class AllZeroWeights(SpatialCPError, ValueError):
    pass


class UntrainedForest(SpatialCPError, RuntimeError):
    pass


class ConfigError(SpatialCPError, ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class SchemaError(SpatialCPError, ValueError):
    """Input data does not match the expected schema (CLI exit code 3)."""
