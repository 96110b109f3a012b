"""Exception and warning types raised across the package."""


class FracPerimError(Exception):
    """Base class for all package errors."""


class ParameterError(FracPerimError, ValueError):
    """A numerical parameter lies outside its admissible range."""


class DivergenceError(FracPerimError):
    """The requested energy is infinite for the given parameters."""


class CoverageError(FracPerimError):
    """A kernel table does not reach far enough for the requested window."""


class DomainError(FracPerimError, ValueError):
    """A shape or grid does not fit the domain it is placed on."""


class DomainMismatchError(DomainError):
    """Two grids that must share a domain do not."""


class EmptySetError(FracPerimError, ValueError):
    """An operation that needs a nonempty set received an empty one."""


class FormatError(FracPerimError, ValueError):
    """A binary file does not follow the expected layout."""


class CoverageWarning(UserWarning):
    """Some pair interactions fall outside the kernel table and were dropped."""


class AccuracyWarning(UserWarning):
    """Adaptive quadrature hit its depth limit before reaching tolerance."""
