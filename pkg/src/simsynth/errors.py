"""Exception types shared across the package."""


class SimSynthError(Exception):
    """Base class for all package errors."""


class AudioFormatError(SimSynthError):
    """Unreadable, corrupt, or unsupported waveform file."""


class SampleRateError(SimSynthError):
    """File sample rate differs from the configured rate and no resampler exists."""


class ManifestError(SimSynthError):
    """Malformed dataset manifest."""


class ConfigError(SimSynthError):
    """Missing, unreadable, or invalid project configuration."""


class EmbeddingFormatError(SimSynthError):
    """Malformed embeddings or class-stats file."""


class StatsError(SimSynthError):
    """Not enough data (or degenerate data) to fit statistics."""


class ShapeError(SimSynthError):
    """Tensor/vector dimensions do not match the operation's contract."""


class GradError(SimSynthError):
    """Invalid request to the reverse-mode engine."""


class CheckpointError(SimSynthError):
    """Unreadable or corrupt checkpoint container."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this build."""


class CheckpointChecksumError(CheckpointError):
    """Checkpoint failed its integrity check; nothing was loaded."""


class DegenerateRegressionError(SimSynthError):
    """Regression input carries no usable variance."""


class ContractViolation(SimSynthError):
    """A value reached an operation outside its documented domain."""
