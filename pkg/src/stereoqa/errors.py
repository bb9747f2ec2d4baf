"""Exception types raised across the stereoqa package.

Every error that callers are expected to catch has a named class here;
all inherit from StereoqaError so `except StereoqaError` catches any
package-level failure without swallowing programming errors.
"""


class StereoqaError(Exception):
    """Base class for all stereoqa errors."""


# --- audio I/O ---

class UnsupportedFormat(StereoqaError):
    """WAV encoding or channel layout the loader does not handle."""


class SampleRateMismatch(StereoqaError):
    """Sample rate differs from the required rate and resampling was not requested."""


class CorruptFile(StereoqaError):
    """File is not a readable RIFF/WAVE container or its payload is damaged."""


class ChannelMismatch(StereoqaError):
    """Reference and coded excerpts have different channel counts."""


class LengthMismatch(StereoqaError):
    """Signal lengths differ by more than the allowed tolerance."""


class ParseError(StereoqaError):
    """Manifest line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class RangeError(StereoqaError):
    """A field value is outside its allowed range."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


# --- frontend / conditioning ---

class InvalidConfig(StereoqaError):
    """Configuration violates its invariants."""


class EmptySignal(StereoqaError):
    """An operation received a zero-length signal."""


class TooLong(StereoqaError):
    """Excerpt exceeds the padding target length."""


class NotStereo(StereoqaError):
    """Operation requires a 2-channel excerpt."""


class NotMono(StereoqaError):
    """Operation requires a 1-channel excerpt."""


# --- model / training ---

class ShapeMismatch(StereoqaError):
    """Tensor shape does not match what the model expects."""


class NonFiniteLoss(StereoqaError):
    """Training loss became NaN or infinite."""


class ShapeIncompatible(StereoqaError):
    """Source and destination tensors cannot be mapped in weight transfer."""


class VersionMismatch(StereoqaError):
    """Checkpoint format version is not supported by this reader."""


class CorruptCheckpoint(StereoqaError):
    """Checkpoint file is malformed."""


class DatasetTooSmall(StereoqaError):
    """Dataset has fewer rows than the requested number of folds."""


# --- evaluation / synthesis ---

class DegenerateInput(StereoqaError):
    """Correlation input has fewer than two points or zero variance."""


class InvalidCutoff(StereoqaError):
    """Low-pass cutoff is outside (0, Nyquist)."""


class EmptySource(StereoqaError):
    """Source directory contains no usable audio."""
