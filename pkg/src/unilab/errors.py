"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for all errors raised by unilab."""


class DimensionError(LabError, ValueError):
    pass


class DegenerateVectorError(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class EmptyBatchError(LabError, ValueError):
    pass


class PreconditionError(LabError, ValueError):
    pass


class UnsupportedOperationError(LabError, TypeError):
    pass


class EvaluationError(LabError, ArithmeticError):
    """A loss evaluated to a non-finite value at a finite-difference probe point."""

    def __init__(self, message, name=None, index=None):
        super().__init__(message)
        self.name = name
        self.index = index


class DivergenceError(LabError, ArithmeticError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value
