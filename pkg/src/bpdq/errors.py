"""Exception types raised by the solvers and generators."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap before meeting its tolerance.

    ``iterations`` and ``residual`` describe the last iterate.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NumericalError(FloatingPointError):
    """An iterate became non-finite."""


class GenerationError(RuntimeError):
    """Random test-signal generation gave up (e.g. ellipse placement)."""
