"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Model input violates a hard precondition.

    ``condition`` is a short machine-readable tag for the violated rule:
    ``"survival-bound"`` (stay + advance must stay below 1) or
    ``"dispersal-conservation"`` (dispersal columns must sum to 1).
    Other input problems use ``"input"``.
    """

    def __init__(self, message, condition="input"):
        super().__init__(message)
        self.condition = condition


class NumericalError(RuntimeError):
    """A numerical procedure failed: no root in bracket, non-convergence."""


class SingularMatrixError(NumericalError):
    pass
