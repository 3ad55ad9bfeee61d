"""Exception types shared across the toolkit.

Every failure mode that callers may want to distinguish gets its own class;
all inherit from RevlearnError so CLI code can map them to exit codes.
"""


class RevlearnError(Exception):
    """Base class for all revlearn errors."""


# --- audio I/O and waveform ops ---

class AudioReadError(RevlearnError):
    """File missing, truncated, or not parseable as RIFF/WAV."""


class UnsupportedEncodingError(RevlearnError):
    """WAV sample format other than PCM16 or IEEE float32."""


class EmptyAudioError(RevlearnError):
    """WAV file decoded to zero samples."""


class SampleRateMismatchError(RevlearnError):
    """Two signals combined without a common sample rate."""


class SilentSignalError(RevlearnError):
    """Operation undefined on an all-zero signal (SNR, onset, decay)."""


class InvalidBandError(RevlearnError):
    """Octave band whose upper edge reaches Nyquist for this sample rate."""


# --- RIR analysis ---

class NoLateEnergyError(RevlearnError):
    """All RIR energy lies inside the early window; energy ratio unbounded."""


class InsufficientDecayError(RevlearnError):
    """Decay curve never spans the -5..-35 dB fit range, or the fit degenerates."""


class AllBandsFailedError(RevlearnError):
    """No octave band produced a usable parameter set."""


# --- features ---

class SignalTooShortError(RevlearnError):
    """Signal shorter than a single analysis frame."""


class FeatureFormatError(RevlearnError):
    """Corrupt or unrecognized feature blob."""


# --- dataset ---

class DatasetError(RevlearnError):
    """Empty corpus, unusable manifest, or inconsistent dataset files."""


# --- neural network ---

class ShapeError(RevlearnError):
    """Tensor shape incompatible with a layer or model input."""


class NonFiniteLossError(RevlearnError):
    """NaN/inf encountered during training."""


class ModelFormatError(RevlearnError):
    """Corrupt or unrecognized model file."""


# --- evaluation ---

class MetricError(RevlearnError):
    """Metric undefined for the given inputs (e.g. near-zero MAPE truths).

    `indices` lists the offending positions when applicable.
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = list(indices) if indices is not None else []
