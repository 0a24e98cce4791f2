"""Frequency-bias (FB) estimation from a single preamble up chirp.

Three estimators of increasing robustness and cost:

* DECHIRP_FFT -- dechirp + peak search on the W/2^S bin grid (the
  demodulator-style baseline; resolution-limited).
* LINREG -- unwrap the sample phase, subtract the known chirp quadratic,
  fit a line: slope = 2*pi*delta.  Fast, accurate only at high SNR.
* LSQ -- fit the full I/Q template in the least-squares sense over
  (delta, theta) with seeded differential evolution.  Noise-resilient.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import differential_evolution

from lorastamp.phy import IQTrace, PhyParams, SignalError

DEFAULT_DELTA_BOUNDS = (-30e3, 30e3)


class EstimationError(ValueError):
    """FB estimation failed or produced an out-of-range result."""


@dataclass(frozen=True)
class FbEstimate:
    delta_hz: float
    estimator: str  # DECHIRP_FFT | LINREG | LSQ
    residual: float
    snr_db: float | None = None
    warning: str | None = None


@dataclass(frozen=True)
class LsqConfig:
    """Differential-evolution search configuration for the LSQ estimator."""

    population: int = 30
    max_generations: int = 200
    delta_bounds: tuple[float, float] = DEFAULT_DELTA_BOUNDS
    theta_bounds: tuple[float, float] = (0.0, 2 * math.pi)
    seed: int = 0
    amplitude: float = 0.5  # envelope amplitude of the I/Q template

    def __post_init__(self) -> None:
        if self.population < 15:
            raise EstimationError("population must be at least 15")
        lo, hi = self.delta_bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise EstimationError("delta bounds must be finite and ordered")
        if self.amplitude < 0:
            raise EstimationError("amplitude must be non-negative")


def _check_result(delta: float, phy: PhyParams) -> None:
    if abs(delta) >= phy.bandwidth_hz / 2:
        raise EstimationError(f"estimate {delta:.1f} Hz beyond half bandwidth")


def _base_chirp_phase(phy: PhyParams, t: np.ndarray) -> np.ndarray:
    """Up-chirp phase for delta = 0, theta = 0."""
    return math.pi * phy.chirp_rate * t ** 2 - math.pi * phy.bandwidth_hz * t


def estimate_fb_fft(chirp: IQTrace, phy: PhyParams, snr_db: float | None = None) -> FbEstimate:
    """Dechirp + spectral peak on the native W/2^S bin grid.

    The chirp must be onset-aligned and one chirp time long.  Estimates are
    exactly quantized to multiples of W/2^S.  Two near-equal peaks (within
    1 dB) are flagged low-confidence.
    """
    t = chirp.times()
    dechirped = chirp.samples * np.exp(-1j * _base_chirp_phase(phy, t))
    half = phy.n_bins // 2
    bins = np.arange(-half, half)
    freqs = bins * phy.bin_width_hz
    spectrum = np.exp(-2j * math.pi * np.outer(freqs, t)) @ dechirped
    power = np.abs(spectrum) ** 2
    order = np.argsort(power)[::-1]
    peak, second = order[0], order[1]
    warning = None
    if power[second] > 0 and 10 * math.log10(power[peak] / power[second]) < 1.0:
        warning = "low-confidence: two peaks within 1 dB"
    delta = float(freqs[peak])
    _check_result(delta, phy)
    residual = float(1.0 - power[peak] / np.sum(power))
    return FbEstimate(delta, "DECHIRP_FFT", residual, snr_db, warning)


def estimate_fb_linreg(chirp: IQTrace, phy: PhyParams, snr_db: float | None = None) -> FbEstimate:
    """Phase-unwrap linear regression; returns delta = slope / (2*pi).

    Flagged unreliable when the unwrap rectification rate reaches one
    correction per 4 samples (noise-dominated phase).
    """
    t = chirp.times()
    raw = np.angle(chirp.samples)
    jumps = int(np.count_nonzero(np.abs(np.diff(raw)) > math.pi))
    theta = np.unwrap(raw) - _base_chirp_phase(phy, t)
    slope, intercept = np.polyfit(t, theta, 1)
    residual = float(np.sum((theta - (slope * t + intercept)) ** 2))
    delta = float(slope / (2 * math.pi))
    _check_result(delta, phy)
    warning = None
    if jumps >= len(chirp) / 4:
        warning = "unreliable: unwrap rectification rate >= 1 per 4 samples"
    return FbEstimate(delta, "LINREG", residual, snr_db, warning)


def estimate_fb_lsq(
    chirp: IQTrace,
    phy: PhyParams,
    cfg: LsqConfig,
    snr_db: float | None = None,
) -> FbEstimate:
    """Least-squares template fit over (delta, theta) via differential evolution.

    Minimizes sum (Q - A sin Theta)^2 + (I - A cos Theta)^2, equivalently
    sum |x - A exp(j Theta)|^2, with Theta the biased chirp phase.
    Deterministic for a fixed config seed.
    """
    t = chirp.times()
    base = np.exp(1j * _base_chirp_phase(phy, t))
    x = chirp.samples
    amp = cfg.amplitude
    two_pi_t = 2 * math.pi * t

    def objective(params: np.ndarray) -> float:
        delta, theta = params
        template = amp * base * np.exp(1j * (two_pi_t * delta + theta))
        return float(np.sum(np.abs(x - template) ** 2))

    result = differential_evolution(
        objective,
        bounds=[cfg.delta_bounds, cfg.theta_bounds],
        seed=cfg.seed,
        maxiter=cfg.max_generations,
        popsize=max(5, cfg.population // 2),
        tol=1e-8,
        polish=True,
        workers=1,
        updating="immediate",
    )
    delta = float(result.x[0])
    _check_result(delta, phy)
    warning = None
    span = cfg.delta_bounds[1] - cfg.delta_bounds[0]
    if min(delta - cfg.delta_bounds[0], cfg.delta_bounds[1] - delta) < 1e-4 * span:
        warning = "boundary solution: delta at a search bound"
    return FbEstimate(delta, "LSQ", float(result.fun), snr_db, warning)


def estimate_amplitude(
    trace: IQTrace,
    signal_range: tuple[int, int],
    noise_range: tuple[int, int],
) -> float:
    """Template amplitude: sqrt of (mean signal power - mean noise power).

    Clamps to 0 (with a warning) when noise power exceeds signal power.
    Returns the envelope amplitude of the complex baseband (A/2 in the
    transmit-amplitude convention).
    """
    s0, s1 = signal_range
    n0, n1 = noise_range
    if s1 <= s0 or n1 <= n0:
        raise SignalError("signal and noise ranges must be non-empty")
    if max(s0, n0) < min(s1, n1):
        raise SignalError("signal and noise ranges must be disjoint")
    p_sig = float(np.mean(np.abs(trace.samples[s0:s1]) ** 2))
    p_noise = float(np.mean(np.abs(trace.samples[n0:n1]) ** 2))
    if p_sig <= p_noise:
        warnings.warn("noise power exceeds signal power; amplitude clamped to 0")
        return 0.0
    return math.sqrt(p_sig - p_noise)


def second_chirp(trace: IQTrace, phy: PhyParams, onset_sample: int) -> IQTrace:
    """Slice the second preamble chirp [onset + T, onset + 2T).

    The second chirp has a stable amplitude (the first may ramp up), so FB
    estimators run on it.
    """
    n = round(trace.sample_rate * phy.chirp_time)
    start = onset_sample + n
    stop = onset_sample + 2 * n
    if stop > len(trace):
        raise SignalError("trace too short to contain the second preamble chirp")
    return trace.cut(start, stop)


def doppler_fb(speed_mps: float, freq_hz: float) -> float:
    """Doppler-induced frequency shift (v/c) * f for |v| << c."""
    return speed_mps / SPEED_OF_LIGHT * freq_hz
