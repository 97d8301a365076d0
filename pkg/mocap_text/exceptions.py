class MocapTextError(Exception):
    """Base class for every error raised by the package"""


class DimensionError(MocapTextError, ValueError):
    """Tensor shapes do not agree"""


class TapeStateError(MocapTextError, RuntimeError):
    """Gradient tape used out of order"""


class ConfigError(MocapTextError, ValueError):
    """Configuration names something that does not exist"""


class DatasetError(MocapTextError, ValueError):
    """Dataset file or sample is unusable"""


class InvalidTokenError(MocapTextError, ValueError):
    """Token id outside the vocabulary"""


class UnsupportedModeError(MocapTextError, ValueError):
    """Operation requested for an attention mode that cannot provide it"""


class SegmentationError(MocapTextError, ValueError):
    """Segmentation score is undefined for the given input"""


class NotAlignableError(SegmentationError):
    """Prediction cannot be aligned with its annotation"""


class MetricError(MocapTextError, ValueError):
    """Text metric is undefined for the given input"""


class EmbeddingError(MetricError):
    """Sentence embedding provider failed"""


class CheckpointVersionError(MocapTextError, ValueError):
    """Checkpoint was written by an incompatible format version"""
