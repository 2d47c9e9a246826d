"""Exception hierarchy shared by every module.

The CLI maps each family to a distinct exit code (see ``bbmlab.cli``).
"""


class BBMError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParameterError(BBMError, ValueError):
    """An argument violates an operation's precondition."""

    exit_code = 2


class ConfigError(ParameterError):
    """An experiment configuration failed validation."""

    exit_code = 2


class ScheduleInfeasibleError(ParameterError):
    """A tube schedule or correlation budget cannot be realised (e.g. R_T >= T)."""

    exit_code = 2


class StateError(BBMError, RuntimeError):
    """An operation was applied to an object in the wrong state (e.g. empty population)."""

    exit_code = 2


class DataError(BBMError, ValueError):
    """Input data is insufficient for the requested computation."""

    exit_code = 2


class NumericalError(BBMError, ArithmeticError):
    """A numerical scheme left its valid range (blow-up, non-monotone field)."""

    exit_code = 3


class AccuracyError(NumericalError):
    """A quadrature or fit did not reach the requested accuracy."""

    exit_code = 3


class CapacityError(BBMError, MemoryError):
    """The particle population exceeded its hard cap after pruning."""

    exit_code = 4

    def __init__(self, message, *, time=None, size=None, cap=None):
        super().__init__(message)
        self.time = time
        self.size = size
        self.cap = cap
