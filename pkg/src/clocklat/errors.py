"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
resource-cap refusals exit 3, solver non-convergence exit 4.
"""


class CapExceededError(RuntimeError):
    """A computation would exceed a configured resource cap."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    Carries the best iterate found so far and its residual, so callers can
    inspect or resume.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
