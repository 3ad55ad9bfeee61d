"""Ground-truth acoustic parameters from room impulse responses.

Implements the ISO 3382 route: backward-integrated (Schroeder) decay curve,
RT60 extrapolated from an RT30 least-squares fit over -5..-35 dB, clarity
ratios C50/C80, direct-to-reverberant ratio over the leading 2.5 ms, all
computed per octave band (125 Hz .. 4 kHz) and averaged into broadband
values. RIRs with broadband RT60 above 4 s are screened out as unreliable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllBandsFailedError,
    InsufficientDecayError,
    NoLateEnergyError,
    SilentSignalError,
)
from .signal_core import OctaveBand, Signal, bandpass_octave, octave_bands

DB_FLOOR = -100.0
FIT_RANGE_DB = (-35.0, -5.0)
DIRECT_SOUND_MS = 2.5
RT60_LIMIT_S = 4.0

PARAM_NAMES = ("rt60", "c50", "c80", "drr")


@dataclass(frozen=True, eq=False)
class DecayCurve:
    """Backward-integrated energy decay in dB, 0 dB at t=0, floored at -100 dB."""

    levels_db: np.ndarray
    sample_rate: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.levels_db)) / self.sample_rate


@dataclass(frozen=True)
class BandParams:
    rt60: float
    c50: float
    c80: float
    drr: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rt60, self.c50, self.c80, self.drr)


@dataclass(frozen=True)
class AcousticParams:
    """Per-band and broadband-averaged RT60/C50/C80/DRR for one RIR.

    Broadband values are arithmetic means over the bands that produced a
    valid fit; bands that failed are listed in `failed_bands` with a reason.
    """

    rt60: float
    c50: float
    c80: float
    drr: float
    per_band: dict[float, BandParams]
    failed_bands: dict[float, str] = field(default_factory=dict)

    @classmethod
    def from_bands(cls, per_band: dict[float, BandParams],
                   failed: dict[float, str] | None = None) -> "AcousticParams":
        if not per_band:
            raise AllBandsFailedError(
                "no octave band produced a valid parameter set: "
                + "; ".join(f"{c:g} Hz: {r}" for c, r in (failed or {}).items())
            )
        means = [float(np.mean([b.as_tuple()[i] for b in per_band.values()]))
                 for i in range(4)]
        return cls(*means, per_band=dict(per_band), failed_bands=dict(failed or {}))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rt60, self.c50, self.c80, self.drr)

    def to_dict(self) -> dict:
        return {
            "rt60": self.rt60, "c50": self.c50, "c80": self.c80, "drr": self.drr,
            "per_band": {f"{c:g}": list(b.as_tuple()) for c, b in self.per_band.items()},
            "failed_bands": {f"{c:g}": r for c, r in self.failed_bands.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticParams":
        per_band = {float(c): BandParams(*v) for c, v in d["per_band"].items()}
        failed = {float(c): r for c, r in d.get("failed_bands", {}).items()}
        return cls(d["rt60"], d["c50"], d["c80"], d["drr"], per_band, failed)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None


def schroeder_decay(h: Signal) -> DecayCurve:
    """Backward-integrate the squared RIR into a decay curve in dB.

    level[i] = 10*log10(sum_{j>=i} h[j]^2 / total energy). Trailing samples
    with zero remaining energy are dropped and the curve is floored at
    -100 dB, so the result is finite and monotone non-increasing.
    """
    energy = h.samples.astype(np.float64) ** 2
    tail = np.cumsum(energy[::-1])[::-1]
    if tail[0] == 0.0:
        raise SilentSignalError("decay curve undefined for an all-zero RIR")
    nonzero = np.nonzero(tail)[0]
    tail = tail[: nonzero[-1] + 1]
    levels = 10.0 * np.log10(tail / tail[0])
    return DecayCurve(np.maximum(levels, DB_FLOOR), h.sample_rate)


def rt60_from_decay(d: DecayCurve) -> float:
    """RT60 = 2 x RT30 from a least-squares line over the -5..-35 dB range.

    Every curve sample whose level lies in [-35, -5] dB enters the
    (unweighted) fit; the fitted slope gives the time to fall 30 dB.
    """
    lo, hi = FIT_RANGE_DB
    levels = d.levels_db
    if levels.min() > lo:
        raise InsufficientDecayError(
            f"decay reaches only {levels.min():.1f} dB; need {lo:.0f} dB"
        )
    mask = (levels >= lo) & (levels <= hi)
    if np.count_nonzero(mask) < 2:
        raise InsufficientDecayError("fewer than two samples in the fit range")
    t = np.arange(len(levels))[mask] / d.sample_rate
    slope, _ = np.polyfit(t, levels[mask], 1)
    if slope >= 0:
        raise InsufficientDecayError("non-decaying fit (slope >= 0)")
    rt30 = -30.0 / slope
    return 2.0 * rt30


def _energy_ratio_db(h: Signal, boundary_ms: float) -> float:
    # Sample at exactly the boundary time belongs to the late part.
    nb = int(round(boundary_ms * h.sample_rate / 1000.0))
    energy = h.samples.astype(np.float64) ** 2
    early = float(energy[:nb].sum())
    late = float(energy[nb:].sum())
    if late == 0.0:
        raise NoLateEnergyError(
            f"no energy beyond {boundary_ms:g} ms; ratio unbounded"
        )
    if early == 0.0:
        raise SilentSignalError(f"no energy before {boundary_ms:g} ms")
    return 10.0 * math.log10(early / late)


def clarity(h: Signal, early_ms: float = 50.0) -> float:
    """Early-to-late energy ratio in dB (C50 with early_ms=50, C80 with 80)."""
    return _energy_ratio_db(h, early_ms)


def drr(h: Signal) -> float:
    """Direct-to-reverberant ratio: leading 2.5 ms against everything after."""
    return _energy_ratio_db(h, DIRECT_SOUND_MS)


def band_params(h: Signal, band: OctaveBand) -> BandParams:
    """All four parameters for one octave band of an onset-trimmed RIR."""
    filtered = bandpass_octave(h, band)
    rt60 = rt60_from_decay(schroeder_decay(filtered))
    return BandParams(
        rt60=rt60,
        c50=clarity(filtered, 50.0),
        c80=clarity(filtered, 80.0),
        drr=drr(filtered),
    )


def analyze(h: Signal, bands: tuple[OctaveBand, ...] | None = None) -> AcousticParams:
    """Per-band parameters for the six octave bands, averaged to broadband.

    `h` must already be onset-trimmed. Bands whose decay fit fails (or that
    carry no late energy) are excluded from the mean and recorded.
    """
    per_band: dict[float, BandParams] = {}
    failed: dict[float, str] = {}
    for band in (bands or octave_bands()):
        try:
            per_band[band.center_hz] = band_params(h, band)
        except (InsufficientDecayError, NoLateEnergyError, SilentSignalError) as exc:
            failed[band.center_hz] = f"{type(exc).__name__}: {exc}"
    return AcousticParams.from_bands(per_band, failed)


def validate(p: AcousticParams) -> ValidationResult:
    """Screen out implausible RIRs: broadband RT60 above 4 s is rejected.

    The boundary is inclusive; exactly 4.0 s is accepted.
    """
    if p.rt60 > RT60_LIMIT_S:
        return ValidationResult(
            False, f"broadband RT60 {p.rt60:.2f} s exceeds {RT60_LIMIT_S:g} s"
        )
    return ValidationResult(True)
