"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Raised when an input's shape disagrees with the model dimensions.

    The message names the offending axis so callers can report it directly.
    """

    def __init__(self, axis, expected, got):
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(
            f"dimension mismatch on axis '{axis}': expected {expected}, got {got}"
        )


class SingularDesignError(ValueError):
    """Raised when X'X is too ill-conditioned for a joint least-squares solve.

    Callers that only need base estimates for adaptive weights should fall
    back to ``compute_marginal_weights_base``.
    """


class LinearSolveError(RuntimeError):
    """Raised when the inner linear solver fails to reach its tolerance."""
