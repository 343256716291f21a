"""Exception types raised by the engines."""


class BreuilError(Exception):
    """Base class for all library errors."""


class ParamsMismatch(BreuilError):
    """Operands were built over different ring parameters."""


class AmbientMismatch(BreuilError):
    """Lattices live in different ambient spaces."""


class InvalidRingParams(BreuilError, ValueError):
    """Ring parameters violate a structural constraint (odd p, Eisenstein E, ...)."""


class NotInFiltration(BreuilError):
    """An operation defined on a filtration step received an element outside it."""


class UnsupportedFiltrationDepth(BreuilError):
    """Filtration index too large for the divided-power bounds to hold."""


class NotDivisible(BreuilError):
    """Exact division by a power of p failed."""


class NotAModObject(BreuilError):
    """The data does not define an object of the module category."""


class NotStronglyDivisible(BreuilError):
    """The module fails one of the strong divisibility conditions."""


class NotClosedFormEligible(BreuilError):
    """The Frobenius matrix has u-exponents not divisible by p."""


class NonStableSubobject(BreuilError):
    """A proposed subobject is not stable under Frobenius or monodromy."""


class BudgetExceeded(BreuilError):
    """An iteration did not stabilize within its step budget."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PrecisionExhausted(BreuilError):
    """The working precision is too small to certify the result."""


class ParseError(BreuilError, ValueError):
    """Malformed problem description."""
