"""Exception and warning types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class DegeneracyError(ArithmeticError):
    """A problem that should have a unique solution does not."""


class ConvergenceError(ArithmeticError):
    """A numerical procedure did not reach its tolerance."""


class UndefinedTransmissionError(ArithmeticError):
    """Transmission is undefined without a cavity drive (eta == 0)."""


class SweepError(RuntimeError):
    """Too many grid points of a sweep failed."""


class ConfigError(ValueError):
    """Malformed run configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class TruncationWarning(UserWarning):
    """Observables changed by more than the tolerance when the Fock cutoff was raised."""


class BoundaryWarning(UserWarning):
    """An optimum landed on the edge of its search window."""
