"""Custom exceptions for the minimax-infer services."""


class MinimaxError(Exception):
    """Base class for every error raised by minimax-infer."""
    pass


class InvalidArgumentError(MinimaxError, ValueError):
    """Raised when an argument violates an operation's precondition."""
    pass


class PointOutsideSetError(InvalidArgumentError):
    """Raised when γ or ξ lies outside Γ or Ξ."""
    pass


class UnknownProblemError(InvalidArgumentError):
    """Raised when a built-in problem name is not in the registry."""
    pass


class CapabilityError(MinimaxError):
    """Raised when a problem or model lacks what an operation needs."""
    pass


class ConvergenceError(MinimaxError):
    """Raised when an iterative solve fails to converge."""
    pass


class BoundaryError(MinimaxError):
    """Raised when a maximizer or minimizer sits on the boundary of its set."""
    pass


class AssumptionViolationError(MinimaxError):
    """Raised when a regularity assumption of the asymptotic theory fails."""

    def __init__(self, message: str, assumption: str = ""):
        super().__init__(message)
        self.assumption = assumption


class StationarityError(AssumptionViolationError):
    """Raised when ∇ξf does not vanish at an interior active point."""
    pass


class FirstOrderConditionError(AssumptionViolationError):
    """Raised when no Lagrange multiplier exists at the candidate γ*."""
    pass


class QPInfeasibleError(MinimaxError):
    """Raised when no active subset of the limiting QP is accepted."""

    def __init__(self, message: str, draw_index: int | None = None):
        super().__init__(message)
        self.draw_index = draw_index


class RadiusTooSmallError(MinimaxError):
    """Raised when the quadratic-model minimizer lands on the trust radius."""
    pass


class ReplicationFailureError(MinimaxError):
    """Raised when too many Monte Carlo replications fail to converge."""
    pass


class ConfigError(MinimaxError):
    """Raised when a run configuration fails schema validation."""

    def __init__(self, message: str, pointers: list[str] | None = None):
        super().__init__(message)
        self.pointers = pointers or []
