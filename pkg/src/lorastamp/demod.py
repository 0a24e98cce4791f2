"""Dechirp symbol oracle.

A deliberately simple symbol-level decoder used to judge collision
outcomes: correlate each chirp window against the bank of 2^S candidate
symbol chirps (the non-coherent dechirp bank) and read the dominant
symbol.  Not a full receiver -- no header parsing, FEC, or CRC -- just
enough to tell whether a frame survives a collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lorastamp.phy import (
    IQTrace,
    PhyParams,
    PREAMBLE_CHIRPS,
    SFD_CHIRPS,
    SignalError,
    _segment_phase,
    _symbol_segments,
)

DEFAULT_CAPTURE_MARGIN_DB = 6.0
DEFAULT_HEADER_SYMBOLS = 8

_BANK_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


@dataclass(frozen=True)
class FrameDecode:
    """Result of decoding one frame position inside a trace."""

    sync_ok: bool
    symbols: tuple[int, ...]
    sync_margins_db: tuple[float, ...]  # per sync window, worst-case first


def _symbol_bank(phy: PhyParams, sample_rate: float) -> np.ndarray:
    """(2^S, n) matrix of conjugated unit-amplitude candidate symbol chirps."""
    key = (phy.spreading_factor, phy.bandwidth_hz, sample_rate)
    bank = _BANK_CACHE.get(key)
    if bank is None:
        rows = []
        for k in range(phy.n_bins):
            phase, _ = _segment_phase(_symbol_segments(phy, k), sample_rate)
            rows.append(np.exp(-1j * phase))
        bank = np.vstack(rows)
        _BANK_CACHE[key] = bank
    return bank


def _bin_powers(window: np.ndarray, phy: PhyParams, sample_rate: float) -> np.ndarray:
    """Correlation power of the window against every candidate symbol chirp."""
    bank = _symbol_bank(phy, sample_rate)
    if window.size != bank.shape[1]:
        raise SignalError("window length does not match one chirp time")
    return np.abs(bank @ window) ** 2


def symbol_at(trace: IQTrace, phy: PhyParams, start_sample: int) -> int:
    """Decode the symbol of the chirp window starting at ``start_sample``."""
    n = round(trace.sample_rate * phy.chirp_time)
    if start_sample < 0 or start_sample + n > len(trace):
        raise SignalError("chirp window outside trace bounds")
    power = _bin_powers(trace.samples[start_sample:start_sample + n], phy, trace.sample_rate)
    return int(np.argmax(power))


def _window_margin_db(window: np.ndarray, phy: PhyParams, sample_rate: float) -> float:
    """Dominance of the best symbol hypothesis over the residual energy.

    By Cauchy-Schwarz the matched-filter peak is at most n * E_window,
    with equality for a clean on-grid chirp, so the residual
    n * E_window - peak measures in-window interference-plus-noise and
    the margin reads as the window's effective SINR in dB.
    """
    power = _bin_powers(window, phy, sample_rate)
    peak = float(np.max(power))
    energy = window.size * float(np.sum(np.abs(window) ** 2))
    rest = energy - peak
    if peak <= 0:
        return -math.inf
    if rest <= 1e-12 * energy:
        return math.inf
    return 10 * math.log10(peak / rest)


def decode_frame(
    trace: IQTrace,
    phy: PhyParams,
    n_payload: int,
    onset_sample: int = 0,
    capture_margin_db: float = DEFAULT_CAPTURE_MARGIN_DB,
    header_symbols: int = DEFAULT_HEADER_SYMBOLS,
) -> FrameDecode:
    """Decode a frame whose preamble starts at ``onset_sample``.

    Sync is declared good when every preamble window and every header
    window (the first ``header_symbols`` payload chirps) has its best
    symbol hypothesis at least ``capture_margin_db`` above the residual
    window energy -- a capture-effect proxy for the demodulator locking
    on.  Payload symbols are decoded by plain argmax regardless.
    """
    if n_payload < header_symbols:
        raise SignalError("frame shorter than its header")
    sr = trace.sample_rate
    n = round(sr * phy.chirp_time)
    payload_base = PREAMBLE_CHIRPS + SFD_CHIRPS  # 10.25 chirp times
    need = onset_sample + round(sr * (payload_base + n_payload) * phy.chirp_time)
    if onset_sample < 0 or need > len(trace):
        raise SignalError("frame extends beyond trace")

    margins = []
    for i in range(PREAMBLE_CHIRPS):
        start = onset_sample + round(sr * i * phy.chirp_time)
        w = trace.samples[start:start + n]
        margins.append(_window_margin_db(w, phy, trace.sample_rate))
    symbols = []
    for j in range(n_payload):
        start = onset_sample + round(sr * (payload_base + j) * phy.chirp_time)
        w = trace.samples[start:start + n]
        if j < header_symbols:
            margins.append(_window_margin_db(w, phy, trace.sample_rate))
        power = _bin_powers(w, phy, trace.sample_rate)
        symbols.append(int(np.argmax(power)))

    margins.sort()
    sync_ok = margins[0] >= capture_margin_db
    return FrameDecode(sync_ok, tuple(symbols), tuple(margins))
