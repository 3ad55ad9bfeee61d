"""Synthetic test signals: exponential-decay RIRs and noise-burst sources.

The RIR generator modulates an exponential envelope with random +/-1 signs,
which keeps the squared samples (and therefore every energy ratio and the
decay slope) exactly equal to the deterministic envelope while spreading the
spectrum flat across all octave bands. Closed forms for such an RIR with
envelope exp(-t/tau):

    RT60 = 3*ln(10)*tau
    C50  = 10*log10(exp(0.100/tau) - 1)
    C80  = 10*log10(exp(0.160/tau) - 1)
    DRR  = 10*log10(exp(0.005/tau) - 1)
"""

from __future__ import annotations

import math

import numpy as np

from .signal_core import Signal

RT60_PER_TAU = 3.0 * math.log(10.0)  # 6.9078: RT60 = 3*ln(10) * tau


def exponential_rir(tau_s: float, sample_rate: int = 16000,
                    duration_s: float | None = None, seed: int = 0) -> Signal:
    """Sign-randomized exponential-envelope RIR with decay constant tau_s."""
    if duration_s is None:
        duration_s = max(10.0 * tau_s, 0.1)
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    return Signal(np.exp(-t / tau_s) * signs, sample_rate)


def tau_for_rt60(rt60_s: float) -> float:
    """Envelope decay constant that yields the requested RT60."""
    return rt60_s / RT60_PER_TAU


def expected_clarity(tau_s: float, early_ms: float) -> float:
    """Closed-form early/late energy ratio for the exponential envelope."""
    return 10.0 * math.log10(math.expm1(2.0 * early_ms / 1000.0 / tau_s))


def noise_burst(duration_s: float, sample_rate: int = 16000, seed: int = 0) -> Signal:
    """Gated white noise with a sharp offset early in the signal.

    The burst is confined to the first 40% of the duration, so convolving
    with an RIR leaves most of the signal as free decay; that sharp offset
    is what makes these useful sources for reverberation estimation.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    out = np.zeros(n)
    start = int(rng.uniform(0.02, 0.10) * n)
    stop = int(rng.uniform(0.25, 0.40) * n)
    out[start:stop] = rng.standard_normal(stop - start)
    return Signal(out, sample_rate)
