"""Exception types raised across the package."""


class PhaselockError(Exception):
    """Base class for all library errors."""


class GraphError(PhaselockError, ValueError):
    """Malformed graph input or a query the graph cannot answer."""


class ConvergenceError(PhaselockError, RuntimeError):
    """An iterative solver or integrator failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundaryGuardError(PhaselockError, ValueError):
    """A ball-based probe or fit window reaches the truncation boundary."""


class HypothesisGateError(PhaselockError):
    """A stability hypothesis failed, so decay rates may not be claimed.

    ``hypothesis`` names the failed condition (e.g. ``"VG(d), d >= 2"``).
    """

    def __init__(self, hypothesis, detail=""):
        msg = f"hypothesis gate refused: {hypothesis}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)
        self.hypothesis = hypothesis
        self.detail = detail
