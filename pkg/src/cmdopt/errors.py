"""Exception hierarchy shared by all modules."""


class CMDError(Exception):
    """Base class for errors raised by cmdopt."""


class ContractViolation(CMDError, ValueError):
    """Arguments violate a documented precondition (shapes, flags)."""


class InputError(CMDError, ValueError):
    """Input values are unusable, e.g. non-finite right-hand sides."""


class NumericalBreakdown(CMDError, ArithmeticError):
    """A Krylov recurrence produced non-finite coefficients."""


class DomainError(CMDError, ValueError):
    """A point lies outside the domain of a potential."""


class RangeError(DomainError):
    """A dual vector lies outside the gradient range of a potential."""


class ConfigError(CMDError, ValueError):
    """Invalid experiment or solver configuration."""


class StepError(CMDError, RuntimeError):
    """A solver step failed; ``report`` carries the failing Krylov report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RunError(CMDError, RuntimeError):
    """An experiment failed; the message names the problem and method."""
