"""Preamble onset detection.

Three parameter-less detectors over a complex baseband trace:

* ENV  -- Hilbert-transform amplitude envelope + folding (consecutive
  chunk-sum ratios); chunk-level resolution.
* CORR -- spectrogram correlation against the up-chirp/SFD junction
  "hill peak" template; spectrogram-hop resolution.
* AIC  -- autoregressive change-point picker; single-sample resolution.

Plus the round-trip RMSD evaluation identity RMSD(err) = RMSD(delta)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from lorastamp.phy import (
    IQTrace,
    PhyParams,
    RxParams,
    TxParams,
    gen_down_chirp,
    gen_up_chirp,
    spectrogram,
)

DEFAULT_CHUNK_LEN = 200
AIC_MIN_SEGMENT = 256
AIC_COARSE_STRIDE = 64
AIC_REFINE_SPAN = 128
CORR_MIN_SCORE = 0.5


class NoOnsetError(RuntimeError):
    """The detector could not find a preamble onset in the trace."""


@dataclass(frozen=True)
class OnsetResult:
    onset_sample: int
    onset_time_ns: int
    detector: str
    score: float


def _result(trace: IQTrace, onset_sample: int, detector: str, score: float) -> OnsetResult:
    onset_sample = int(np.clip(onset_sample, 0, max(len(trace) - 1, 0)))
    t_ns = trace.t0_ns + round(onset_sample / trace.sample_rate * 1e9)
    return OnsetResult(onset_sample, t_ns, detector, float(score))


def detect_env(trace: IQTrace, chunk_len: int = DEFAULT_CHUNK_LEN) -> OnsetResult:
    """Envelope detector: onset at the start of the chunk whose sum-ratio
    to its predecessor peaks.  Earliest chunk wins ties."""
    if len(trace) < 2 * chunk_len:
        raise NoOnsetError("trace shorter than two chunks")
    envelope = np.abs(hilbert(trace.i))
    n_chunks = len(trace) // chunk_len
    sums = envelope[: n_chunks * chunk_len].reshape(n_chunks, chunk_len).sum(axis=1)
    if not np.any(sums > 0):
        raise NoOnsetError("all-zero trace")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(sums[:-1] > 0, sums[1:] / np.maximum(sums[:-1], 1e-300), np.inf)
        ratios = np.where((sums[:-1] == 0) & (sums[1:] == 0), 0.0, ratios)
    peak = int(np.argmax(ratios))
    return _result(trace, (peak + 1) * chunk_len, "ENV", ratios[peak])


def _pearson_slide(big: np.ndarray, small: np.ndarray) -> np.ndarray:
    """Pearson correlation of a flattened template slid over matrix columns."""
    n_big, n_small = big.shape[0], small.shape[0]
    tmpl = small.ravel()
    tmpl = tmpl - tmpl.mean()
    t_norm = np.linalg.norm(tmpl)
    out = np.full(n_big - n_small + 1, -1.0)
    for off in range(out.size):
        win = big[off:off + n_small].ravel()
        win = win - win.mean()
        denom = np.linalg.norm(win) * t_norm
        if denom > 0:
            out[off] = float(np.dot(win, tmpl) / denom)
    return out


def detect_corr(trace: IQTrace, phy: PhyParams, min_score: float = CORR_MIN_SCORE) -> OnsetResult:
    """Correlation detector: locate the preamble/SFD junction hill peak and
    step back 8 chirp times.  Raises NoOnsetError when the best normalized
    correlation stays below ``min_score`` (e.g. no SFD in the trace)."""
    tx = TxParams()
    rx = RxParams()
    up = gen_up_chirp(phy, tx, rx, trace.sample_rate)
    down = gen_down_chirp(phy, tx, rx, trace.sample_rate)
    # last preamble up chirp plus both full SFD down chirps: a trace of up
    # chirps alone correlates well below min_score against this shape
    template = IQTrace(
        np.concatenate([up.samples, down.samples, down.samples]), trace.sample_rate
    )
    spec_t = spectrogram(template, phy)
    spec_x = spectrogram(trace, phy)
    if spec_x.n_columns < spec_t.n_columns:
        raise NoOnsetError("trace too short for the junction template")
    corr = _pearson_slide(spec_x.psd, spec_t.psd)
    best = int(np.argmax(corr))
    if corr[best] < min_score:
        raise NoOnsetError(f"no SFD junction found (best correlation {corr[best]:.2f})")
    chirp_samples = round(trace.sample_rate * phy.chirp_time)
    # template starts one chirp before the junction, i.e. 7 chirps after onset
    onset = best * spec_x.hop - 7 * chirp_samples
    return _result(trace, onset, "CORR", corr[best])


def _ar2_sigma2(x: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """AR(2) one-step prediction error variance for segments x[a:b).

    Yule-Walker on mean-removed autocovariances, computed with prefix sums
    so many candidate segments are evaluated at once.
    """
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    l1 = np.concatenate(([0.0], np.cumsum(x[:-1] * x[1:])))
    l2 = np.concatenate(([0.0], np.cumsum(x[:-2] * x[2:])))
    n = (stops - starts).astype(float)
    mu = (s1[stops] - s1[starts]) / n
    r0 = (s2[stops] - s2[starts]) / n - mu ** 2
    r1 = (l1[stops - 1] - l1[starts]) / (n - 1) - mu ** 2
    r2 = (l2[stops - 2] - l2[starts]) / (n - 2) - mu ** 2
    det = r0 ** 2 - r1 ** 2
    safe = np.abs(det) > 1e-30
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = np.where(safe, r1 * (r0 - r2) / det, 0.0)
        a2 = np.where(safe, (r0 * r2 - r1 ** 2) / det, 0.0)
    sigma2 = r0 - a1 * r1 - a2 * r2
    return np.maximum(sigma2, 1e-300)


def _aic_curve(x: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    n = x.size
    left = _ar2_sigma2(x, np.zeros_like(candidates), candidates)
    right = _ar2_sigma2(x, candidates, np.full_like(candidates, n))
    return candidates * np.log(left) + (n - candidates) * np.log(right)


def detect_aic(
    trace: IQTrace,
    min_segment: int = AIC_MIN_SEGMENT,
    coarse_stride: int = AIC_COARSE_STRIDE,
    refine_span: int = AIC_REFINE_SPAN,
) -> OnsetResult:
    """AR-AIC change-point picker on the analytic magnitude sequence.

    Coarse pass on a strided candidate grid, then single-sample refinement
    around the coarse minimum.
    """
    if len(trace) < 2 * min_segment:
        raise NoOnsetError("trace shorter than two AR segments")
    x = np.abs(trace.samples)
    if float(np.ptp(x)) < 1e-12 * max(float(np.max(x)), 1.0):
        raise NoOnsetError("degenerate (constant) trace")
    n = x.size
    coarse = np.arange(min_segment, n - min_segment + 1, coarse_stride)
    aic_c = _aic_curve(x, coarse)
    k0 = int(coarse[np.argmin(aic_c)])
    lo = max(min_segment, k0 - refine_span)
    hi = min(n - min_segment, k0 + refine_span)
    fine = np.arange(lo, hi + 1)
    aic_f = _aic_curve(x, fine)
    best = int(np.argmin(aic_f))
    depth = float(np.median(aic_f) - aic_f[best])
    return _result(trace, int(fine[best]), "AIC", depth)


def rmsd_roundtrip(deltas) -> float:
    """Onset-error RMSD from measured round-trip times: RMSD(delta)/2.

    Each round trip stacks four i.i.d. onset detection errors, so the
    per-event error RMSD is half the RMSD of the measured round-trip times.
    """
    d = np.asarray(deltas, dtype=float)
    if d.size < 2:
        raise ValueError("need at least 2 round-trip samples")
    if not np.all(np.isfinite(d)):
        raise ValueError("round-trip samples must be finite")
    return 0.5 * float(math.sqrt(np.mean(d ** 2)))
