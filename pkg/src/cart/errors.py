"""Exception types raised across the package."""


class CartError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CartError, ValueError):
    """A configuration or scenario field violates its declared invariant."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NotSafe(CartError):
    """The log barrier is undefined because some clearance h is at or below the floor."""

    def __init__(self, min_h, index=None):
        self.min_h = float(min_h)
        self.index = index
        super().__init__(f"barrier undefined: min h = {self.min_h:.3e} (object {index})")


class RiccatiFailure(CartError):
    """No stabilizing solution of the pointwise Riccati equation was found."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message if state is None else f"{message} at state {state}")


class GainTooSmall(CartError):
    """The robust gain leaves no positive decay rate for the error envelope."""


class PlannerFailure(CartError):
    """The global reference planner ended with an unsafe or non-convergent plan."""


class QPInfeasible(CartError):
    """The CLF-CBF quadratic program has no feasible point."""


class NonFiniteState(CartError):
    """Integration produced a non-finite state entry."""
