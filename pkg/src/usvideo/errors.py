class ConfigurationError(ValueError):
    """Invalid shapes, hyperparameters or layer geometry."""


class DataError(ValueError):
    """A dataset file or manifest violates the container format."""


class CheckpointError(ValueError):
    """A checkpoint file is truncated, corrupt or of the wrong version."""
