"""Exception hierarchy shared by all modules."""


class BlochHSError(Exception):
    """Base class for all package errors."""


class ArgumentError(BlochHSError, ValueError):
    """Invalid argument value."""


class DomainError(BlochHSError, ValueError):
    """Point outside the domain of definition."""


class GeometryError(BlochHSError, ValueError):
    """Geometry parameters cannot be meshed."""


class AssemblyError(BlochHSError):
    """Mesh and coefficient field are incompatible."""


class NumericError(BlochHSError, ArithmeticError):
    """Solver failure or ill-conditioned fit.

    Parameters
    ----------
    message : str
        Human readable description.
    residual : float, optional
        Last residual (or condition number) reached before failure.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NormalizationError(NumericError):
    """Boundary master value of an eigenvector vanishes."""


class ConsistencyError(NumericError):
    """Two discrete routes for the same quantity disagree."""


class ResolutionError(BlochHSError, ValueError):
    """Macro mesh too coarse for the micro-structure."""
