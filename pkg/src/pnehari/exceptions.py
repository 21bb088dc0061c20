"""Exception and warning types raised across the package."""


class PNehariError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(PNehariError, ValueError):
    """Nodal values are non-finite, mis-shaped or violate the Dirichlet mask."""


class ParameterError(PNehariError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigurationError(PNehariError, ValueError):
    """A symmetry, grid or run configuration is inconsistent."""


class DegenerateInputError(PNehariError, ValueError):
    """The input is (numerically) zero where a nontrivial field is required."""


class PreconditionError(PNehariError, ValueError):
    """An operation was called outside its documented precondition."""


class ResolutionError(PNehariError, ValueError):
    """A length scale is below the lattice spacing."""


class NoSeparationError(PNehariError, ValueError):
    """The point is fixed by the group, so its orbit cannot be separated."""


class SingularFluxWarning(RuntimeWarning):
    """Unregularized flux with p < 2 met a cell with vanishing gradient."""


class ResolutionWarning(RuntimeWarning):
    """The bubble core is not resolved by the lattice."""


class DegenerateInitializationError(DegenerateInputError):
    """The equivariant projection annihilates the initial seed."""
