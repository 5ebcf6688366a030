"""Exception types shared across the package."""


class FakefillError(Exception):
    """Base class for all package errors."""


class ConfigError(FakefillError):
    """Invalid configuration value, unknown key, or violated invariant."""


class DataError(FakefillError):
    """Dataset, manifest, image decoding, or mask generation failure."""


class ModelError(FakefillError):
    """Shape mismatch or invalid input to a network forward pass."""


class LossError(FakefillError):
    """Malformed inputs to a loss function."""


class MetricsError(FakefillError):
    """Malformed inputs to a metric or report aggregation."""


class CheckpointError(FakefillError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class TrainingDivergence(FakefillError):
    """A loss term became non-finite; the run must abort."""
