"""Exception types shared across the package."""


class ReplayLabError(Exception):
    """Base class for all package errors."""


class ParameterError(ReplayLabError, ValueError):
    """An argument or scheme parameter lies outside its domain."""


class OrderingError(ReplayLabError, ValueError):
    """A transition was pushed out of global-time order."""


class SamplingError(ReplayLabError, RuntimeError):
    """Sampling was requested from an empty or zero-weight buffer."""


class FormulaDomainError(ReplayLabError, ArithmeticError):
    """A closed-form weight produced a negative intermediate value."""


class DivergenceError(ReplayLabError, ArithmeticError):
    """A fitted Q table left the admissible range."""
