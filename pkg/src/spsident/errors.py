"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, argument, or input dimensions."""


class NotPsdError(ValueError):
    """A matrix that must be positive semidefinite has a significantly
    negative eigenvalue."""


class DegeneracyError(ArithmeticError):
    """A computation that requires a full-rank normal matrix encountered a
    rank-deficient one (e.g. the asymptotic confidence ellipsoid)."""


class DegenerateNormalizationWarning(RuntimeWarning):
    """A normalization matrix was rank deficient and a pseudoinverse was
    used in its place."""
