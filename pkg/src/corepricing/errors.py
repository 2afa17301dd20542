"""Exception hierarchy shared by the pricing engine and the CLI."""


class PricingError(Exception):
    """Base class for every error raised by corepricing."""

    exit_code = 2


class InvalidInputError(PricingError, ValueError):
    """Malformed instance, unknown buyer, or out-of-range argument."""

    exit_code = 1


class PreconditionError(PricingError):
    """An operation was called on data violating its precondition."""


class ResourceLimitError(PricingError):
    """An enumeration exceeded its configured cap."""


class BoundaryPointError(PricingError):
    """A derivative was requested at (or too near) a breakpoint."""


class RangeInvalidError(PricingError):
    """The winner set changed inside a bid sweep."""

    def __init__(self, message, crossing_bid=None):
        super().__init__(message)
        self.crossing_bid = crossing_bid


class ConstructionError(PricingError):
    """A generated scenario did not produce the expected winners."""


class NumericalFailure(PricingError, ArithmeticError):
    """An iterative solver hit its iteration cap.

    ``best`` holds the last iterate and ``residuals`` whatever residual
    information was available when the solver gave up.
    """

    exit_code = 3

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals or {}
