class InvalidArgument(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailure(RuntimeError):
    """An iterative or truncated computation did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationUnstable(NumericalFailure):
    """The ion configuration has a non positive-definite Hessian."""


class TruncationError(NumericalFailure):
    """Fock-space truncation leaks population; carries a suggested size."""

    def __init__(self, message, residual=None, suggested_n_max=None):
        super().__init__(message, residual)
        self.suggested_n_max = suggested_n_max
