"""Exception hierarchy."""


class HosaError(ValueError):
    """Base class for all errors raised by this package."""


class WavError(HosaError):
    """A WAV file could not be ingested.

    ``field`` names the offending part of the container (``"file"``,
    ``"container"``, ``"encoding"``, ``"bit_depth"``, ``"channels"``).
    """

    field = "file"

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class UnreadableFileError(WavError):
    field = "file"


class ContainerError(WavError):
    field = "container"


class UnsupportedEncodingError(WavError):
    field = "encoding"


class UnsupportedBitDepthError(WavError):
    field = "bit_depth"


class UnsupportedChannelsError(WavError):
    field = "channels"


class InsufficientDataError(HosaError):
    """Input too short (or too few segments/bins) for the requested analysis."""


class MaskedEstimateError(HosaError):
    """Every bin of a bicoherence estimate is undefined."""


class ConvergenceError(HosaError):
    """Root bracketing failed; ``bracket`` holds the last interval."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


class CalibrationError(HosaError):
    """Labelled data cannot support threshold calibration."""


class AnalysisError(HosaError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
