"""LoRa chirp-spread-spectrum baseband signal model.

A chirp observed through an SDR front end mixes down to

    I(t) = (A/2) cos(Theta(t)),   Q(t) = (A/2) sin(Theta(t)),
    Theta(t) = (pi W^2 / 2^S) t^2 - pi W t + 2 pi delta t + theta,

with delta = delta_Tx - delta_Rx the relative frequency bias and
theta = theta_Tx - theta_Rx the unknown phase difference.  Traces are
stored as complex baseband: samples = I + jQ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_SAMPLE_RATE = 2.4e6  # Hz, the RTL-SDR convention used throughout

VALID_BANDWIDTHS = (125e3, 250e3, 500e3)

PREAMBLE_CHIRPS = 8
SFD_CHIRPS = 2.25


class SignalError(ValueError):
    """Invalid signal parameters or degenerate input trace."""


@dataclass(frozen=True)
class PhyParams:
    """LoRa physical-layer configuration."""

    spreading_factor: int
    bandwidth_hz: float
    center_freq_hz: float = 869.75e6
    coding_rate: str = "4/5"

    def __post_init__(self) -> None:
        if self.spreading_factor not in range(6, 13):
            raise SignalError(f"spreading factor must be in 6..12, got {self.spreading_factor}")
        if self.bandwidth_hz not in VALID_BANDWIDTHS:
            raise SignalError(f"bandwidth must be one of {VALID_BANDWIDTHS}, got {self.bandwidth_hz}")
        if not math.isfinite(self.center_freq_hz) or self.center_freq_hz <= 0:
            raise SignalError("center frequency must be positive and finite")

    @property
    def n_bins(self) -> int:
        return 2 ** self.spreading_factor

    @property
    def chirp_time(self) -> float:
        """Chirp duration 2^S / W in seconds."""
        return self.n_bins / self.bandwidth_hz

    @property
    def chirp_rate(self) -> float:
        """Frequency sweep rate W^2 / 2^S in Hz/s."""
        return self.bandwidth_hz ** 2 / self.n_bins

    @property
    def bin_width_hz(self) -> float:
        """Dechirp-FFT frequency resolution W / 2^S."""
        return self.bandwidth_hz / self.n_bins


@dataclass(frozen=True)
class TxParams:
    """Transmitter-side signal parameters."""

    fb_hz: float = 0.0          # delta_Tx
    phase_rad: float = 0.0      # theta_Tx, in [0, 2*pi)
    amplitude: float = 1.0      # A; the baseband envelope is A/2
    ramp_fraction: float = 0.0  # linear amplitude ramp over this fraction of chirp 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.phase_rad < 2 * math.pi):
            raise SignalError("phase must be in [0, 2*pi)")
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise SignalError("amplitude must be positive and finite")
        if not (0.0 <= self.ramp_fraction <= 1.0):
            raise SignalError("ramp_fraction must be in [0, 1]")
        if not math.isfinite(self.fb_hz):
            raise SignalError("transmitter frequency bias must be finite")


@dataclass(frozen=True)
class RxParams:
    """Receiver-side (SDR front end) parameters."""

    fb_hz: float = 0.0      # delta_Rx
    phase_rad: float = 0.0  # theta_Rx, in [0, 2*pi)
    noise_floor_db: float = float("-inf")

    def __post_init__(self) -> None:
        if not (0.0 <= self.phase_rad < 2 * math.pi):
            raise SignalError("phase must be in [0, 2*pi)")
        if not math.isfinite(self.fb_hz):
            raise SignalError("receiver frequency bias must be finite")


@dataclass
class IQTrace:
    """Uniformly sampled complex baseband trace (I + jQ)."""

    samples: np.ndarray
    sample_rate: float
    t0_ns: int = 0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate <= 0:
            raise SignalError("sample rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise SignalError("I/Q samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def i(self) -> np.ndarray:
        return self.samples.real

    @property
    def q(self) -> np.ndarray:
        return self.samples.imag

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        """Sample times in seconds relative to sample 0."""
        return np.arange(self.samples.size) / self.sample_rate

    def power(self) -> float:
        """Mean power per sample."""
        if not self.samples.size:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def cut(self, start: int, stop: int) -> "IQTrace":
        """Sub-trace [start, stop) with t0 adjusted."""
        start = max(0, start)
        return IQTrace(
            self.samples[start:stop].copy(),
            self.sample_rate,
            self.t0_ns + round(start / self.sample_rate * 1e9),
        )

    def copy(self) -> "IQTrace":
        return IQTrace(self.samples.copy(), self.sample_rate, self.t0_ns)


@dataclass
class Spectrogram:
    """Short-time power spectral densities (time bins x freq bins)."""

    psd: np.ndarray
    window_len: int
    overlap: int
    sample_rate: float
    freqs_hz: np.ndarray = field(repr=False, default=None)
    times_s: np.ndarray = field(repr=False, default=None)

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap

    @property
    def n_columns(self) -> int:
        return self.psd.shape[0]

    def ridge_bins(self) -> np.ndarray:
        """Index of the max-power frequency bin in each column."""
        return np.argmax(self.psd, axis=1)


def _check_rates(phy: PhyParams, sample_rate: float) -> None:
    if not math.isfinite(sample_rate) or sample_rate <= 0:
        raise SignalError("sample rate must be positive and finite")
    if sample_rate < 2 * phy.bandwidth_hz:
        raise SignalError(
            f"sample rate {sample_rate} below baseband Nyquist 2W = {2 * phy.bandwidth_hz}"
        )


def _segment_phase(
    segments: list[tuple[float, float, float]],
    sample_rate: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the continuous-phase concatenation of linear-sweep segments.

    Each segment is (f_start, rate, duration): instantaneous frequency
    f_start + rate*t over local time t in [0, duration).  Phase is carried
    across segment boundaries so the concatenation has no phase jumps.
    Sample counts come from rounding the cumulative boundary times, so the
    total count is round(sample_rate * total_duration) exactly.

    Returns (phase, t_global) arrays.
    """
    phases = []
    t_all = []
    carry = 0.0  # phase at segment start
    t_edge = 0.0  # segment start, continuous time
    n_edge = 0  # first sample index of the segment
    for f0, rate, dur in segments:
        n_next = round(sample_rate * (t_edge + dur))
        idx = np.arange(n_edge, n_next)
        t_global = idx / sample_rate
        t_local = t_global - t_edge
        phases.append(carry + 2 * np.pi * (f0 * t_local + 0.5 * rate * t_local ** 2))
        t_all.append(t_global)
        carry += 2 * np.pi * (f0 * dur + 0.5 * rate * dur ** 2)
        t_edge += dur
        n_edge = n_next
    return np.concatenate(phases), np.concatenate(t_all)


def _synthesize(
    phy: PhyParams,
    tx: TxParams,
    rx: RxParams,
    sample_rate: float,
    segments: list[tuple[float, float, float]],
    ramp_samples: int = 0,
) -> IQTrace:
    """Common path: sample segment phases, add bias/phase terms, scale."""
    _check_rates(phy, sample_rate)
    delta = tx.fb_hz - rx.fb_hz
    if not math.isfinite(delta):
        raise SignalError("frequency bias must be finite")
    theta = tx.phase_rad - rx.phase_rad
    base_phase, t = _segment_phase(segments, sample_rate)
    full_phase = base_phase + 2 * np.pi * delta * t + theta
    envelope = np.full(t.size, tx.amplitude / 2.0)
    if ramp_samples > 0:
        n = min(ramp_samples, t.size)
        envelope[:n] *= np.arange(1, n + 1) / n
    return IQTrace(envelope * np.exp(1j * full_phase), sample_rate)


def gen_up_chirp(
    phy: PhyParams,
    tx: TxParams,
    rx: RxParams,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> IQTrace:
    """One preamble up chirp: frequency sweeps -W/2+delta to +W/2+delta."""
    seg = [(-phy.bandwidth_hz / 2, phy.chirp_rate, phy.chirp_time)]
    ramp = round(tx.ramp_fraction * sample_rate * phy.chirp_time)
    return _synthesize(phy, tx, rx, sample_rate, seg, ramp_samples=ramp)


def gen_down_chirp(
    phy: PhyParams,
    tx: TxParams,
    rx: RxParams,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> IQTrace:
    """One down chirp: frequency sweeps +W/2+delta to -W/2+delta."""
    seg = [(phy.bandwidth_hz / 2, -phy.chirp_rate, phy.chirp_time)]
    ramp = round(tx.ramp_fraction * sample_rate * phy.chirp_time)
    return _synthesize(phy, tx, rx, sample_rate, seg, ramp_samples=ramp)


def _symbol_segments(phy: PhyParams, symbol: int) -> list[tuple[float, float, float]]:
    """Segments of a payload chirp: cyclic shift of the base up chirp.

    The chirp starts at -W/2 + k*W/2^S, sweeps up, and wraps to -W/2 at the
    band edge.  Phase stays continuous through the frequency wrap.
    """
    w = phy.bandwidth_hz
    if symbol == 0:
        return [(-w / 2, phy.chirp_rate, phy.chirp_time)]
    t_wrap = (phy.n_bins - symbol) / w
    return [
        (-w / 2 + symbol * phy.bin_width_hz, phy.chirp_rate, t_wrap),
        (-w / 2, phy.chirp_rate, symbol / w),
    ]


def gen_frame(
    phy: PhyParams,
    tx: TxParams,
    rx: RxParams,
    payload_symbols: list[int] | np.ndarray = (),
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> IQTrace:
    """Full frame: 8 preamble up chirps, 2.25-down-chirp SFD, payload chirps.

    Payload symbols are encoded as cyclically shifted up chirps.  Phase is
    continuous across all chirp boundaries; total length is
    round(sample_rate * (10.25 + n_payload) * chirp_time) samples.
    """
    w = phy.bandwidth_hz
    rate = phy.chirp_rate
    tc = phy.chirp_time
    segments: list[tuple[float, float, float]] = []
    for _ in range(PREAMBLE_CHIRPS):
        segments.append((-w / 2, rate, tc))
    for _ in range(2):
        segments.append((w / 2, -rate, tc))
    segments.append((w / 2, -rate, tc / 4))  # quarter down chirp
    for sym in payload_symbols:
        sym = int(sym)
        if not 0 <= sym < phy.n_bins:
            raise SignalError(f"payload symbol {sym} out of range [0, {phy.n_bins})")
        segments.extend(_symbol_segments(phy, sym))
    ramp = round(tx.ramp_fraction * sample_rate * tc)
    return _synthesize(phy, tx, rx, sample_rate, segments, ramp_samples=ramp)


def add_awgn(
    trace: IQTrace,
    target_snr_db: float,
    rng_seed: int,
    signal_range: tuple[int, int] | None = None,
) -> IQTrace:
    """Add complex white Gaussian noise for a target SNR.

    The reference signal power is measured over ``signal_range`` (default:
    the whole trace).  ``target_snr_db = +inf`` is the no-noise sentinel.
    Deterministic for a given seed.
    """
    if not len(trace):
        raise SignalError("cannot add noise to an empty trace")
    if target_snr_db == float("inf"):
        return trace.copy()
    if signal_range is None:
        p_sig = trace.power()
    else:
        a, b = signal_range
        seg = trace.samples[a:b]
        if not seg.size:
            raise SignalError("empty signal range")
        p_sig = float(np.mean(np.abs(seg) ** 2))
    noise_power = p_sig / 10.0 ** (target_snr_db / 10.0)
    rng = np.random.default_rng(rng_seed)
    sigma = math.sqrt(noise_power / 2.0)
    noise = rng.normal(0.0, sigma, len(trace)) + 1j * rng.normal(0.0, sigma, len(trace))
    return IQTrace(trace.samples + noise, trace.sample_rate, trace.t0_ns)


BELOW_NOISE_FLOOR = float("-inf")


def measure_snr(
    trace: IQTrace,
    noise_range: tuple[int, int],
    signal_range: tuple[int, int] | None = None,
) -> float:
    """SNR in dB: 10*log10((P_total - P_noise) / P_noise).

    Noise power comes from the noise-only segment; total power from the
    signal segment (default: everything outside the noise segment).
    Returns ``BELOW_NOISE_FLOOR`` when total power does not exceed noise.
    """
    a, b = noise_range
    noise = trace.samples[a:b]
    if not noise.size:
        raise SignalError("noise segment is empty")
    if signal_range is None:
        mask = np.ones(len(trace), dtype=bool)
        mask[a:b] = False
        sig = trace.samples[mask]
    else:
        sig = trace.samples[signal_range[0]:signal_range[1]]
    if not sig.size:
        raise SignalError("signal segment is empty")
    p_noise = float(np.mean(np.abs(noise) ** 2))
    p_total = float(np.mean(np.abs(sig) ** 2))
    if p_total <= p_noise or p_noise == 0.0:
        return BELOW_NOISE_FLOOR
    return 10.0 * math.log10((p_total - p_noise) / p_noise)


def spectrogram(
    trace: IQTrace,
    phy: PhyParams,
    window_beta: float = 8.0,
    overlap: int = 16,
) -> Spectrogram:
    """Short-time FFT with a 2^S-point Kaiser window and 16-point overlap.

    Columns start every (window - overlap) samples; only windows followed by
    a full hop are emitted, which yields 20 columns for one S=7 chirp at the
    2.4 Msps sampling convention.
    """
    win_len = phy.n_bins
    if overlap >= win_len:
        raise SignalError("overlap must be smaller than the window")
    n = len(trace)
    if n < win_len:
        raise SignalError("trace shorter than one spectrogram window")
    hop = win_len - overlap
    n_cols = max(1, (n - win_len) // hop)
    window = np.kaiser(win_len, window_beta)
    cols = np.empty((n_cols, win_len))
    for c in range(n_cols):
        seg = trace.samples[c * hop:c * hop + win_len] * window
        cols[c] = np.abs(np.fft.fftshift(np.fft.fft(seg))) ** 2
    freqs = np.fft.fftshift(np.fft.fftfreq(win_len, d=1.0 / trace.sample_rate))
    times = (np.arange(n_cols) * hop + win_len / 2) / trace.sample_rate
    return Spectrogram(cols, win_len, overlap, trace.sample_rate, freqs, times)
