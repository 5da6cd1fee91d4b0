"""Exception types shared across the harness."""


class LesionBenchError(Exception):
    """Base class for all harness errors."""


class MaskShapeError(LesionBenchError):
    """Mask data has the wrong shape, dtype, or value range."""


class EmptyMaskError(LesionBenchError):
    """An operation that needs foreground pixels got an all-zero mask."""


class DegenerateBoxError(LesionBenchError):
    """Clamping collapsed a box to zero area."""


class ManifestError(LesionBenchError):
    """Dataset manifest could not be built or parsed."""


class PredictorError(LesionBenchError):
    """External predictor failed, timed out, or produced unusable output."""
