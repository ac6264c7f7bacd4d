"""Exception types shared across the toolkit."""


class DeblurkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(DeblurkitError, ValueError):
    """Tensor shape or size violates an operation's precondition."""


class RegistryError(DeblurkitError, ValueError):
    """Unknown name requested from a component registry."""


class AssetError(DeblurkitError):
    """A required external weight asset is missing or fails verification."""


class CheckpointError(DeblurkitError):
    """Checkpoint container is corrupted or has an incompatible format."""


class ConfigError(DeblurkitError, ValueError):
    """Run configuration fails schema validation."""


class UnsupportedLayerError(DeblurkitError):
    """FLOPs counter met a layer type it has no cost model for."""


class DisconnectedGraphError(DeblurkitError, ValueError):
    """Pairwise comparison graph is disconnected; score fitting is ill-posed."""


class TrainingDivergedError(DeblurkitError):
    """A non-finite loss was produced during training."""
