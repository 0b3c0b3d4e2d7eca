"""Exception types shared across the package."""


class DiffnetError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DiffnetError):
    """An argument violates a documented precondition."""


class NotPsdError(DiffnetError):
    """A matrix required to be positive semi-definite is not."""


class SingularMatrixError(DiffnetError):
    """A linear solve hit a singular or indefinite matrix."""


class ConstructionError(DiffnetError):
    """A randomized construction failed (e.g. no connected graph found)."""


class ConvergenceError(DiffnetError):
    """An iterative solver did not reach its tolerance."""


class DivergenceError(DiffnetError):
    """A simulation produced non-finite iterates."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class NumericError(DiffnetError):
    """A numerical routine failed outside the cases above."""


class ConfigError(DiffnetError):
    """An experiment configuration is missing or malformed."""
