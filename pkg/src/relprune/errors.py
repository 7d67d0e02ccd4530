"""Exception hierarchy shared across the package."""


class RelpruneError(Exception):
    """Base class for all package errors."""


class ConfigError(RelpruneError, ValueError):
    """Invalid frame, channel, model or experiment configuration."""


class InvalidLength(RelpruneError, ValueError):
    """Bit or vector length incompatible with the requested operation."""


class SimError(RelpruneError, ValueError):
    """Dimension mismatch inside the link simulation."""


class TrainingDiverged(RelpruneError, RuntimeError):
    """Training produced a non-finite loss."""


class TraceError(RelpruneError, ValueError):
    """Activation trace does not match the model it is used with."""


class MaskError(RelpruneError, ValueError):
    """Mask has the wrong shape for the model."""


class MaskEmpty(MaskError):
    """Input mask would remove every subcarrier."""


class LayerCollapse(MaskError):
    """Pruning would leave a hidden layer with no active neuron."""


class CheckpointError(RelpruneError):
    """Checkpoint cannot be read."""


class CorruptCheckpoint(CheckpointError):
    """Checkpoint bytes are truncated or fail the integrity check."""


class VersionMismatch(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


class NoImprovement(RelpruneError):
    """No grid-search candidate passed the BER gate."""
