"""Exception hierarchy."""


class QlyapError(Exception):
    """Base class for all library errors."""


class DimensionError(QlyapError, ValueError):
    pass


class NotHermitianError(QlyapError, ValueError):
    pass


class NumericalError(QlyapError, ArithmeticError):
    """A numerical invariant (trace, positivity, unitarity, ...) was breached."""


class ConditionError(QlyapError, ValueError):
    """The system violates the level-structure or coupling assumptions."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ScenarioError(QlyapError, ValueError):
    """Malformed scenario document."""
