"""revlearn: room-acoustics analysis and blind acoustic parameter estimation.

Three layers of functionality:

* ISO 3382-style ground truth from room impulse responses (RT60 via
  Schroeder decay + RT30 fit, C50/C80, DRR, per octave band).
* Dataset synthesis: dry audio convolved with RIRs, calibrated noise,
  MFCC features, deterministic sharded output.
* From-scratch CRNN estimators (baseline / crnn1 / crnn2) trained with
  Adam + early stopping to regress all four parameters jointly.
"""

from .errors import RevlearnError
from .features import FeatureConfig, FeatureMatrix, mfcc
from .rir_analysis import AcousticParams, analyze, clarity, drr, validate
from .signal_core import (
    OctaveBand,
    Signal,
    add_noise_at_snr,
    bandpass_octave,
    chunk,
    convolve,
    load_audio,
    normalize_minmax,
    trim_to_onset,
)

__version__ = "0.1.0"

__all__ = [
    "AcousticParams",
    "FeatureConfig",
    "FeatureMatrix",
    "OctaveBand",
    "RevlearnError",
    "Signal",
    "add_noise_at_snr",
    "analyze",
    "bandpass_octave",
    "chunk",
    "clarity",
    "convolve",
    "drr",
    "load_audio",
    "mfcc",
    "normalize_minmax",
    "trim_to_onset",
    "validate",
]
