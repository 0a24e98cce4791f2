"""Command-line surface: generate traces, estimate FB, run the attack
model, detect onsets, and emit the figure-style CSV datasets.

Machine-readable output goes to stdout only; logs go to stderr.  Every
command is deterministic given its arguments and seed.  Exit codes:
0 success, 2 usage error or missing/malformed trace sidecar.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from lorastamp import attack, fbest, iqfile, onset, repro
from lorastamp.phy import (
    DEFAULT_SAMPLE_RATE,
    PhyParams,
    RxParams,
    SignalError,
    TxParams,
    add_awgn,
    gen_frame,
)

_ONSET_DETECTORS = {
    "env": lambda trace, phy: onset.detect_env(trace),
    "corr": lambda trace, phy: onset.detect_corr(trace, phy),
    "aic": lambda trace, phy: onset.detect_aic(trace),
}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_gen(args) -> int:
    phy = PhyParams(spreading_factor=args.sf, bandwidth_hz=args.bw)
    payload = [int(s) for s in args.payload.split(",") if s] if args.payload else []
    tx = TxParams(fb_hz=args.fb, ramp_fraction=args.ramp)
    trace = gen_frame(phy, tx, RxParams(), payload, args.samplerate)
    if args.noise_pad > 0:
        samples = np.concatenate(
            [np.zeros(args.noise_pad, dtype=np.complex128), trace.samples]
        )
        signal_range = (args.noise_pad, samples.size)
        trace = type(trace)(samples, trace.sample_rate, trace.t0_ns)
    else:
        signal_range = None
    if math.isfinite(args.snr):
        trace = add_awgn(trace, args.snr, rng_seed=args.seed, signal_range=signal_range)
    iqfile.write_cf32(args.out, trace, center_freq_hz=phy.center_freq_hz)
    _log(f"wrote {args.out} ({len(trace)} samples)")
    print(json.dumps({"file": str(args.out), "n_samples": len(trace)}, sort_keys=True))
    return 0


def _load(path: str):
    trace, _meta = iqfile.read_cf32(path)
    return trace


def cmd_estimate(args) -> int:
    phy = PhyParams(spreading_factor=args.sf, bandwidth_hz=args.bw)
    for path in args.files:
        trace = _load(path)
        if args.onset == "none":
            start = args.onset_sample
        else:
            start = _ONSET_DETECTORS[args.onset](trace, phy).onset_sample
        chirp = fbest.second_chirp(trace, phy, start)
        if args.method == "fft":
            est = fbest.estimate_fb_fft(chirp, phy)
        elif args.method == "linreg":
            est = fbest.estimate_fb_linreg(chirp, phy)
        else:
            est = fbest.estimate_fb_lsq(chirp, phy, fbest.LsqConfig(seed=args.seed))
        print(
            json.dumps(
                {
                    "file": str(path),
                    "delta_hz": est.delta_hz,
                    "estimator": est.estimator,
                    "residual": est.residual,
                    "warning": est.warning,
                },
                sort_keys=True,
            )
        )
    return 0


def cmd_onset(args) -> int:
    phy = PhyParams(spreading_factor=args.sf, bandwidth_hz=args.bw)
    for path in args.files:
        trace = _load(path)
        res = _ONSET_DETECTORS[args.detector](trace, phy)
        print(
            json.dumps(
                {
                    "detector": res.detector,
                    "file": str(path),
                    "onset_sample": res.onset_sample,
                    "onset_time_ns": res.onset_time_ns,
                    "score": res.score,
                },
                sort_keys=True,
            )
        )
    return 0


def cmd_attack(args) -> int:
    scenario, model = attack.load_scenario(args.scenario)
    if args.area_out:
        x0, x1, y0, y1 = args.bounds
        area = attack.vulnerable_area(scenario, model, (x0, x1, y0, y1), args.resolution)
        attack.write_cell_map(args.area_out, area)
        print(json.dumps({"core_area_m2": area.core_area_m2}, sort_keys=True))
        return 0
    report = {
        "scr_gateway_db": attack.scr_at(scenario.gateway, scenario, model),
        "scr_eavesdropper_db": attack.scr_at(scenario.eavesdropper, scenario, model),
    }
    if args.lag_ms is not None:
        windows = attack.lookup_windows(args.sf, args.payload_bytes, interpolate=True)
        report["outcome"] = attack.classify_by_timing(args.lag_ms, windows)
    else:
        report["outcome"] = attack.classify_outcome_map(
            scenario.rtm, report["scr_gateway_db"]
        )
    if args.emit_replay:
        trace = _load(args.emit_replay_input)
        replayed = attack.replay(
            trace, scenario.replay_delay_s, scenario.replayer_fb_hz, rng_seed=args.seed
        )
        iqfile.write_cf32(args.emit_replay, replayed)
        report["replay_file"] = str(args.emit_replay)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_repro(args) -> int:
    builder = repro.BUILDERS[args.figure]
    path = builder(Path(args.out), seed=args.seed)
    _log(f"built {args.figure} with {repro.n_threads()} thread(s)")
    print(json.dumps({"figure": args.figure, "file": str(path)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorastamp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a frame trace (.cf32 + sidecar)")
    g.add_argument("--sf", type=int, choices=range(6, 13), required=True)
    g.add_argument("--bw", type=float, default=125e3)
    g.add_argument("--fb", type=float, default=0.0, help="transmitter FB in Hz")
    g.add_argument("--snr", type=float, default=math.inf, help="target SNR in dB")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--payload", default="", help="comma-separated symbols")
    g.add_argument("--samplerate", type=float, default=DEFAULT_SAMPLE_RATE)
    g.add_argument("--ramp", type=float, default=0.0)
    g.add_argument("--noise-pad", type=int, default=0, help="noise-only samples before the frame")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("estimate", help="estimate FB from trace files")
    e.add_argument("--method", choices=("fft", "linreg", "lsq"), default="lsq")
    e.add_argument("--sf", type=int, choices=range(6, 13), default=7)
    e.add_argument("--bw", type=float, default=125e3)
    e.add_argument("--onset", choices=("none", "env", "corr", "aic"), default="none")
    e.add_argument("--onset-sample", type=int, default=0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("files", nargs="+")
    e.set_defaults(fn=cmd_estimate)

    o = sub.add_parser("onset", help="detect preamble onsets")
    o.add_argument("--detector", choices=("env", "corr", "aic"), default="aic")
    o.add_argument("--sf", type=int, choices=range(6, 13), default=7)
    o.add_argument("--bw", type=float, default=125e3)
    o.add_argument("files", nargs="+")
    o.set_defaults(fn=cmd_onset)

    a = sub.add_parser("attack", help="evaluate an attack scenario")
    a.add_argument("--scenario", required=True)
    a.add_argument("--sf", type=int, default=7)
    a.add_argument("--payload-bytes", type=int, default=30)
    a.add_argument("--lag-ms", type=float, default=None)
    a.add_argument("--area-out", default=None, help="write the cell map CSV here")
    a.add_argument("--bounds", type=float, nargs=4, default=(-300.0, 700.0, -300.0, 300.0))
    a.add_argument("--resolution", type=float, default=5.0)
    a.add_argument("--emit-replay", default=None, help="write the replayed trace here")
    a.add_argument("--emit-replay-input", default=None)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(fn=cmd_attack)

    r = sub.add_parser("repro", help="emit a figure-style CSV dataset")
    r.add_argument("figure", choices=sorted(repro.BUILDERS))
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(fn=cmd_repro)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except iqfile.SidecarError as exc:
        _log(f"error: {exc}")
        return 2
    except (SignalError, attack.AttackError, fbest.EstimationError, onset.NoOnsetError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
