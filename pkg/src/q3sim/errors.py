"""Exception hierarchy for the payload simulator."""


class Q3SimError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(Q3SimError, ValueError):
    """A physical parameter or argument violates its documented bounds."""


class CapacityError(Q3SimError, OverflowError):
    """A requested run would overflow the integer-picosecond time axis."""


class DataError(Q3SimError, ValueError):
    """An input table or series is malformed or incomplete."""


class ConfigurationError(Q3SimError, ValueError):
    """A hardware configuration is inconsistent (ports, channels, wiring)."""


class NormalizationError(Q3SimError, ArithmeticError):
    """A normalization constant is zero so the estimate is undefined."""


class BudgetError(Q3SimError, ValueError):
    """A probe or photon budget is too small for the requested procedure."""


class SignalError(Q3SimError, RuntimeError):
    """Measured rates are all zero; there is nothing to optimize on."""


class FitError(Q3SimError, RuntimeError):
    """A model fit failed (insufficient contrast or degenerate data)."""


class DomainError(Q3SimError, ValueError):
    """No real solution exists for the requested quantity."""


class ValidationError(Q3SimError, ValueError):
    """A scenario file failed validation. Carries the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
