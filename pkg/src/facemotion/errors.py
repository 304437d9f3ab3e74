"""Exception types shared across the engine."""


class FacemotionError(Exception):
    """Base class for all engine errors."""


class DimensionError(FacemotionError):
    """Shapes or sizes of inputs do not agree."""


class InvalidPoseError(FacemotionError):
    """Rotation is not orthonormal with det +1, or scale is not positive."""


class MaskError(FacemotionError):
    """Region mask indices out of range, duplicated, or overlapping."""


class WeightsError(FacemotionError):
    """Model weight tensors inconsistent with their dimension record."""


class FormatError(FacemotionError):
    """A serialized file is malformed. Carries line/record context in the message."""


class VersionError(FormatError):
    """A serialized file declares an unsupported format version."""


class ConfigError(FacemotionError):
    """Configuration document failed schema validation."""


class ScheduleError(FacemotionError):
    """Control schedule references unknown names or invalid frame ranges."""


class PipelineError(FacemotionError):
    """A per-frame stage failed; message carries the frame index."""


class TrainingError(FacemotionError):
    """Training aborted; .trace holds the per-step losses seen so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
