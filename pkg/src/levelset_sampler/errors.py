"""Exception types shared across the package."""


class SamplerError(Exception):
    """Base class for all errors raised by this package."""


class RankDeficiencyError(SamplerError):
    """The constraint Jacobian lost full column rank at an evaluation point."""

    def __init__(self, point, smallest_singular_value):
        self.point = point
        self.smallest_singular_value = smallest_singular_value
        super().__init__(
            f"constraint Jacobian is rank deficient at {point} "
            f"(smallest singular value {smallest_singular_value:.3e})"
        )


class LinearSolveError(SamplerError):
    """A linear solve against the constraint Gram matrix failed."""


class ProjectionError(SamplerError):
    """The projection flow did not reach the constraint tolerance.

    Carries the offending state and, when raised from a chain, the step index.
    """

    def __init__(self, message, state=None, step_index=None):
        self.state = state
        self.step_index = step_index
        super().__init__(message)


class ConfigError(SamplerError):
    """Invalid experiment configuration."""
