"""Exception types shared across the package."""


class CapacityError(ValueError):
    """Problem size exceeds an exact-enumeration or simulation cap."""


class EmptyArrayError(ValueError):
    """Every lattice site was removed."""


class PropagationError(ArithmeticError):
    """Time propagation failed to converge within its iteration cap."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


class DivergenceError(ValueError):
    """A divergence is undefined because of a support violation."""

    def __init__(self, message, bins=()):
        super().__init__(message)
        self.bins = tuple(bins)


class TrainingError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, batch_index=-1):
        super().__init__(message)
        self.batch_index = batch_index


class IndependenceWarning(UserWarning):
    """A target bitstring violates the Rydberg blockade."""
