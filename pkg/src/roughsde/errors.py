"""Exception types raised by the library."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class NumericFailure(ArithmeticError):
    """A numerical factorization or estimate could not be completed."""


class SolverDiverged(FloatingPointError):
    """A time-stepping scheme produced a non-finite or exploding state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"solver diverged at step {step}")
