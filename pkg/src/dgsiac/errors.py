"""Exception types raised by the solver and estimator pipeline."""


class DgsiacError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DgsiacError, ValueError):
    """Invalid or unsupported combination of parameters."""


class InadmissibleStateError(DgsiacError):
    """A state left the admissible set of the problem.

    Parameters
    ----------
    message : str
        Human readable description.
    cell : tuple of int, optional
        Multi-index of the first offending cell.
    component : int, optional
        Offending solution component.
    """

    def __init__(self, message, cell=None, component=None):
        super().__init__(message)
        self.cell = cell
        self.component = component


class SolverError(DgsiacError):
    """A linear stage solve did not reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AmbiguousPointError(DgsiacError, ValueError):
    """A point lies on a cell face and no trace side was requested."""


class DegenerateStencilError(DgsiacError, ValueError):
    """Hermite interpolation was given repeated time nodes."""
