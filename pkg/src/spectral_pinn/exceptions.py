"""Domain-specific error types raised across the package."""


class RankDeficientError(ValueError):
    """A basis design matrix lost column rank; recovery would be ambiguous."""


class PoleSingularityError(ValueError):
    """Spherical Laplacian requested too close to a pole (1/sin factors)."""


class InvalidGridError(ValueError):
    """Mesh or sampling grid does not satisfy its structural preconditions."""


class DegenerateTriangleError(ValueError):
    """A mesh triangle has (numerically) zero area."""


class InstabilityError(RuntimeError):
    """Time stepper detected coefficient blow-up."""


class NonFiniteCoefficientError(RuntimeError):
    """Time stepper produced NaN/Inf coefficients."""


class TimeOutOfRangeError(ValueError):
    """Requested time is not on the stored trajectory grid."""


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or is inconsistent."""
