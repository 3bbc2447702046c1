"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad names, dimensions, or missing requirements."""


class GraphError(ConfigError):
    """Invalid event-graph description (dangling head, duplicate name, ...)."""


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite during training."""
