"""Exception and warning types raised across the package."""


class GaussBubbleError(Exception):
    """Base class for all package errors."""


class InvalidArgument(GaussBubbleError, ValueError):
    pass


class Unsupported(InvalidArgument):
    """Requested configuration lies outside the closed-form catalog (e.g. m > 4)."""


class InconsistentPartition(GaussBubbleError, ValueError):
    pass


class InvalidMesh(InvalidArgument):
    pass


class NumericFailure(GaussBubbleError, ArithmeticError):
    """An iterative solver failed; ``last_iterate`` and ``diagnostics`` describe where."""

    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}


class StructuralViolation(GaussBubbleError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionViolation(GaussBubbleError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TopologyEvent(GaussBubbleError):
    """Raised by the network optimizer when edges collide or a junction collapses.

    ``report`` holds the partial optimization result at the moment the run stopped.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CancellationWarning(RuntimeWarning):
    """Finite-difference estimate is below the cancellation floor."""
