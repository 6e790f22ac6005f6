"""Exception types shared across the package."""


class RewardLabError(Exception):
    """Base class for all errors raised by rewardlab."""


class DataFormatError(RewardLabError):
    """A file failed to parse; carries the path and 1-based line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ValidationError(RewardLabError):
    """An input violated a documented precondition or invariant."""


class TrainingError(RewardLabError):
    """Training aborted (for example on a non-finite loss)."""


class ConvergenceWarning(UserWarning):
    """Optimizer hit its iteration cap before reaching the gradient tolerance."""
