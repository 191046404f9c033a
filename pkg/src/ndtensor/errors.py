class DimensionError(ValueError):
    """Raised when tensor shapes do not fit an operation."""


class ConfigurationError(ValueError):
    """Raised for invalid hyperparameters, profiles or config files."""


class UsageError(ValueError):
    """Raised when an API is called outside its contract."""


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"Non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be read or does not match the model."""

    def __init__(self, message: str, name: str | None = None):
        super().__init__(message if name is None else f"{message}: {name}")
        self.name = name
