"""Exception hierarchy shared by all modules."""


class NmteleError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(NmteleError, ValueError):
    """Invalid parameters, dimensions or object invariants."""


class InvalidDimensionError(ValidationError):
    pass


class InvalidParameterError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class InadequateTruncationError(ValidationError):
    """A state would be silently clipped by its Fock-space truncation."""


class DegenerateStateError(ValidationError):
    pass


class UnsupportedError(NmteleError):
    pass


class NumericalInstabilityError(NmteleError, ArithmeticError):
    """Raised when an invariant drifts beyond tolerance during a computation."""


class ResolutionError(NmteleError, ArithmeticError):
    """A quadrature or time grid is too coarse for the requested tolerance."""


class NegligibleProbabilityError(NmteleError, ArithmeticError):
    """A Bell outcome has (numerically) zero probability density."""


class ResolutionWarning(UserWarning):
    pass


class InvalidSplitError(ValidationError):
    """A bipartition index does not split the system into two parts."""


class InvalidBaselineError(ValidationError):
    pass
