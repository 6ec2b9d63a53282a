"""Exception types raised by the modeling code."""


class Zip3Error(Exception):
    """Base class for package errors."""


class DomainError(Zip3Error, ValueError):
    """A linear predictor maps outside the parameter space."""


class DesignError(Zip3Error, ValueError):
    """Malformed or rank-deficient design matrix."""


class BoundaryError(Zip3Error, ValueError):
    """Data for which the ML estimate lies on the parameter-space boundary."""
