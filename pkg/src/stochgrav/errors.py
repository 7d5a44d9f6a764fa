"""Exception and warning types shared across the package."""


class StochGravError(Exception):
    """Base class for all package errors."""


class DimensionError(StochGravError, ValueError):
    pass


class MetricError(StochGravError, ValueError):
    pass


class SymmetryError(MetricError):
    pass


class PerturbationTooLargeError(MetricError):
    pass


class ConfigError(StochGravError, ValueError):
    pass


class StepSizeError(StochGravError, ValueError):
    pass


class DomainError(StochGravError, ValueError):
    pass


class GridError(StochGravError, ValueError):
    pass


class RangeError(StochGravError, ValueError):
    pass


class DistributionError(StochGravError, ValueError):
    pass


class SampleSizeError(StochGravError, ValueError):
    pass


class NormalizationWarning(UserWarning):
    """Probability form exceeded 1."""


class WeakPerturbationWarning(UserWarning):
    """Metric perturbation is larger than 10% of the base metric."""
