"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: unknown feature, infeasible geometry, bad ranges."""


class InputError(ValueError):
    """Malformed input data: bad labels, empty sets, horizon overruns."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ArithmeticError):
    """A ratio aggregation was asked to divide by an all-zero weight vector."""


class StructuralError(ValueError):
    """A formula does not have the shape an operation requires."""


class NoDiscriminatingPredicates(RuntimeError):
    """Every predicate was removed by the similarity filter."""


class NonFiniteLoss(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss {value!r})")


class BoundsWarning(UserWarning):
    """A feature value fell outside the declared normalization bounds."""
