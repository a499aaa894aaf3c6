"""Exception hierarchy shared across the toolkit."""


class LaunderbenchError(Exception):
    """Base class for all toolkit errors."""


class WavFormatError(LaunderbenchError):
    """Malformed RIFF/WAVE structure (bad magic, missing chunks, truncation)."""


class WavEncodingError(WavFormatError):
    """Structurally valid WAV whose sample encoding is not supported."""


class EmptyBufferError(LaunderbenchError):
    """An operation received an audio buffer with no samples."""


class SampleRateMismatchError(LaunderbenchError):
    """Two inputs that must share a sample rate do not."""


class UnachievableRt60Error(LaunderbenchError):
    """Sabine inversion produced an absorption coefficient above 1."""


class ReflectionOrderError(LaunderbenchError):
    """Required image-source order exceeds the configured cap."""


class DecayRangeError(LaunderbenchError):
    """Impulse response never reaches the decay range needed for an RT60 fit."""


class SilentSignalError(LaunderbenchError):
    """SNR is undefined because the signal or noise has zero RMS."""


class UnknownNoiseError(LaunderbenchError):
    """Requested noise name is not present in the noise bank."""


class NoiseBankError(LaunderbenchError):
    """Noise bank could not be assembled (missing files, silent entries)."""


class FilterDesignError(LaunderbenchError):
    """Invalid filter specification (e.g. cutoff at or above Nyquist)."""


class TranscoderError(LaunderbenchError):
    """External transcoder failed; carries captured diagnostics."""

    def __init__(self, message: str, stdout: str = "", stderr: str = ""):
        super().__init__(message)
        self.stdout = stdout
        self.stderr = stderr


class FeatureError(LaunderbenchError):
    """Front-end feature extraction contract violation."""


class FeatureFileError(LaunderbenchError):
    """Feature file has a bad magic, version, or is truncated."""


class ModelError(LaunderbenchError):
    """GMM training or scoring contract violation."""


class ModelFileError(LaunderbenchError):
    """Model file has a bad magic, version, or is truncated."""


class ProtocolError(LaunderbenchError):
    """Protocol or score file is malformed; message names the offending line."""


class ScoringError(LaunderbenchError):
    """EER or DET computation received unusable inputs (e.g. an empty class)."""


class ConfigError(LaunderbenchError):
    """Attack grid configuration is invalid; message carries the field path."""


class PipelineError(LaunderbenchError):
    """A pipeline stage could not run (missing models, inputs, or outputs)."""
