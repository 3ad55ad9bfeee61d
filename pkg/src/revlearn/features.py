"""MFCC extraction and the feature blob format.

Framing (25 ms / 10 ms, no padding, partial final frame dropped), Hann
window, power spectrum, 40-filter triangular mel bank on the HTK scale
(0..8 kHz), floored log, and an orthonormal DCT-II keeping the first
`n_coeffs` coefficients.

Feature blobs ("RVLF"): magic bytes, u16 version, u32 rows, u32 cols,
then row-major float32 little-endian values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, asdict

import numpy as np
from scipy.fft import dct

from .errors import FeatureFormatError, SignalTooShortError
from .signal_core import Signal

RVLF_MAGIC = b"RVLF"
RVLF_VERSION = 1
_HEADER = struct.Struct("<4sHII")


@dataclass(frozen=True)
class FeatureConfig:
    frame_size_s: float = 0.025
    frame_step_s: float = 0.010
    n_coeffs: int = 20
    n_mels: int = 40
    n_fft: int = 512
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0
    log_floor: float = 1e-10

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """frames x n_coeffs matrix plus the configuration that produced it."""

    values: np.ndarray
    config: FeatureConfig

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FeatureConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel filter weights, shape (n_mels, n_fft//2 + 1)."""
    n_bins = config.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / config.n_fft
    mel_points = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz),
                             config.n_mels + 2)
    bin_mel = hz_to_mel(bin_hz)
    fb = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        left, center, right = mel_points[m], mel_points[m + 1], mel_points[m + 2]
        rising = (bin_mel - left) / (center - left)
        falling = (right - bin_mel) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def filter_center_hz(config: FeatureConfig) -> np.ndarray:
    """Center frequency of each mel filter in Hz."""
    mel_points = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz),
                             config.n_mels + 2)
    return mel_to_hz(mel_points[1:-1])


def frame_count(n_samples: int, config: FeatureConfig, sample_rate: int) -> int:
    size = int(round(config.frame_size_s * sample_rate))
    step = int(round(config.frame_step_s * sample_rate))
    if n_samples < size:
        return 0
    return 1 + (n_samples - size) // step


def mfcc(s: Signal, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """MFCC matrix for a waveform; raises SignalTooShortError below one frame."""
    size = int(round(config.frame_size_s * s.sample_rate))
    step = int(round(config.frame_step_s * s.sample_rate))
    if len(s) < size:
        raise SignalTooShortError(
            f"signal of {len(s)} samples shorter than one {size}-sample frame"
        )
    if config.fmax_hz > s.sample_rate / 2:
        raise ValueError("fmax_hz beyond Nyquist")
    n_frames = 1 + (len(s) - size) // step
    idx = np.arange(size)[None, :] + step * np.arange(n_frames)[:, None]
    frames = s.samples[idx] * np.hanning(size)[None, :]
    power = np.abs(np.fft.rfft(frames, n=config.n_fft, axis=1)) ** 2
    mel_energy = power @ mel_filterbank(config, s.sample_rate).T
    log_mel = np.log(np.maximum(mel_energy, config.log_floor))
    coeffs = dct(log_mel, type=2, norm="ortho", axis=1)[:, : config.n_coeffs]
    return FeatureMatrix(coeffs, config)


def pack_features(values: np.ndarray) -> bytes:
    """Serialize a frames x coeffs matrix to an RVLF blob (float32 LE)."""
    rows, cols = values.shape
    header = _HEADER.pack(RVLF_MAGIC, RVLF_VERSION, rows, cols)
    return header + np.ascontiguousarray(values, dtype="<f4").tobytes()


def unpack_features(blob: bytes) -> np.ndarray:
    """Parse an RVLF blob back into a float32 matrix."""
    if len(blob) < _HEADER.size:
        raise FeatureFormatError("blob shorter than RVLF header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != RVLF_MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}")
    if version != RVLF_VERSION:
        raise FeatureFormatError(f"unsupported RVLF version {version}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) < expected:
        raise FeatureFormatError("truncated RVLF blob")
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    return data.reshape(rows, cols).copy()


def write_features(path, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_features(values))


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return unpack_features(fh.read())
