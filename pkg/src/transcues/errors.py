"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or incompatible option combination."""


class ShapeError(ValueError):
    """Tensor shape violates an operation's contract."""


class DataError(ValueError):
    """Dataset content is invalid (bad class id, malformed file, ...)."""


class IngestionError(RuntimeError):
    """Dataset directory is structurally broken (orphan files, missing parts)."""


class CheckpointError(RuntimeError):
    """Checkpoint file is missing, corrupt, or has the wrong magic."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""
