"""I/Q trace files: interleaved little-endian float32 (.cf32) + JSON sidecar.

The sidecar carries ``{"sample_rate_hz": ..., "center_freq_hz": ..., "t0_ns": ...}``
and is mandatory: a bare .cf32 without its sidecar is rejected.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from lorastamp.phy import IQTrace

SIDECAR_SUFFIX = ".json"


class SidecarError(IOError):
    """Missing or malformed sidecar for a .cf32 file."""


def sidecar_path(cf32_path: str | Path) -> Path:
    return Path(str(cf32_path) + SIDECAR_SUFFIX)


def write_cf32(path: str | Path, trace: IQTrace, center_freq_hz: float = 0.0) -> None:
    """Write interleaved I0,Q0,I1,Q1,... as little-endian float32 plus sidecar."""
    path = Path(path)
    interleaved = np.empty(2 * len(trace), dtype="<f4")
    interleaved[0::2] = trace.samples.real
    interleaved[1::2] = trace.samples.imag
    path.write_bytes(interleaved.tobytes())
    meta = {
        "sample_rate_hz": trace.sample_rate,
        "center_freq_hz": center_freq_hz,
        "t0_ns": trace.t0_ns,
    }
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_cf32(path: str | Path) -> tuple[IQTrace, dict]:
    """Read a .cf32 file; raises SidecarError if the sidecar is absent."""
    path = Path(path)
    sc = sidecar_path(path)
    if not sc.is_file():
        raise SidecarError(f"missing sidecar {sc}")
    try:
        meta = json.loads(sc.read_text())
        sample_rate = float(meta["sample_rate_hz"])
        t0_ns = int(meta.get("t0_ns", 0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SidecarError(f"malformed sidecar {sc}: {exc}") from exc
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size % 2:
        raise SidecarError(f"{path}: odd number of float32 values, not interleaved I/Q")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    return IQTrace(samples, sample_rate, t0_ns), meta
