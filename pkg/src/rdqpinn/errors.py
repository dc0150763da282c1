"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, argument, or index."""


class IntegrationError(RuntimeError):
    """Time integration failed (non-finite derivative or step underflow)."""


class CheckpointError(ValueError):
    """Checkpoint is malformed or incompatible with the requested config."""
