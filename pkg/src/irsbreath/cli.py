"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .breathtrack import (DETECTION_THRESHOLD, normalize_ground_truth, process_phase,
                          synth_chest_displacement)
from .impairments import (ImpairmentParams, QuantizerConfig, SimulatedMeasurement,
                          fraction_within, phase_series, resultant_length,
                          synthesize_csi_arrays)
from .model import binary_projection, far_field_radius, phase_pattern
from .optimizer import (GreedyConfig, aggregate_traces, greedy_optimize,
                        iterations_to_threshold, random_search)
from .scenario_io import (BREATH_TRACE_HEADER, CONVERGENCE_HEADER, HEATMAP_HEADER,
                          IMPAIRMENT_HEADER, PHASE_PATTERN_HEADER, PROJECTION_HEADER,
                          ConfigError, CsiRecord, RunManifest, Table, format_state, grid_rows,
                          load_pattern, load_scenario, load_state, read_subcarrier_phase,
                          read_table, resolve_input, serialize_scenario, parse_scenario,
                          write_csi_stream, write_results)
from .series import PhaseSeries

SCATTER_HALF_WIDTH = math.radians(60.0)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _threads() -> int:
    raw = os.environ.get("IRS_SIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"IRS_SIM_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def _scenario(args):
    path = resolve_input(args.scenario)
    return path, load_scenario(path)


def _quantizer(bits):
    return QuantizerConfig(bits) if bits and bits > 0 else None


def _plots(args) -> bool:
    return not getattr(args, "no_plot", False)


def _manifest(args, command, scenario_path, seeds, configs, inputs=None):
    RunManifest(command=command, scenario_path=str(scenario_path) if scenario_path else None,
                output_dir=str(args.out), seeds=seeds, configs=configs,
                inputs=inputs or {}).write()


def _resolve_state(choice: str, s, args):
    shape = s.irs.shape
    if choice == "all-off":
        return np.zeros(shape, dtype=np.uint8), None
    if choice == "all-on":
        return np.ones(shape, dtype=np.uint8), None
    if choice == "optimize":
        cfg = GreedyConfig(weighting=args.weighting, rng_seed=args.seed)
        m = SimulatedMeasurement(s, _quantizer(args.bits))
        trace = greedy_optimize(cfg, m)
        return trace.best_state, trace
    if choice.startswith("file:"):
        return load_state(choice[5:], shape), None
    raise UsageError(f"--state must be all-off, all-on, optimize or file:<path>, got {choice!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_phase_pattern(args) -> int:
    path, s = _scenario(args)
    if args.round_trip_phase:
        from dataclasses import replace

        s = replace(s, round_trip_phase=True)
    pat = phase_pattern(s)
    bits = binary_projection(pat, args.threshold)
    out = Path(args.out)
    write_results([Table("phase_pattern", PHASE_PATTERN_HEADER, grid_rows(pat)),
                   Table("binary_projection", PROJECTION_HEADER, grid_rows(bits))], out)
    if _plots(args):
        from .plots import plot_grid

        plot_grid(out / "phase_pattern.csv", out / "phase_pattern.png",
                  "ideal element phase", "twilight", "phase [rad]")
        plot_grid(out / "binary_projection.csv", out / "binary_projection.png",
                  "binary projection", "gray_r", "state")
    sym = bool(np.allclose(pat, pat[:, ::-1], atol=1e-9)) if s.antenna_offset[0] == 0 else None
    _manifest(args, "phase-pattern", path, {}, {"round_trip_phase": s.round_trip_phase,
                                                "threshold": args.threshold})
    d_max = max(s.irs.width, s.irs.height)
    print(f"surface {s.irs.n_rows}x{s.irs.n_cols}, far-field radius "
          f"{far_field_radius(d_max, s.wavelength):.3f} m, antenna at {s.antenna_distance} m")
    if sym is not None:
        print(f"left/right mirror symmetric: {'yes' if sym else 'no'}")
    return 0


def cmd_optimize(args) -> int:
    path, s = _scenario(args)
    cfg = GreedyConfig(buffer_len=args.buffer_len, patience=args.patience,
                       max_iterations=args.budget, weighting=args.weighting, rng_seed=args.seed)
    m = SimulatedMeasurement(s, _quantizer(args.bits))
    tr = greedy_optimize(cfg, m)
    out = Path(args.out)
    write_results([
        Table("trace", ("iteration", "measured", "cum_min", "accepted"), tr.records()),
        Table("heatmap", HEATMAP_HEADER, grid_rows(tr.buffers.heatmap())),
    ], out)
    (out / "best_state.txt").write_text(format_state(tr.best_state))
    if _plots(args):
        from .plots import plot_grid, plot_trace

        plot_trace(out / "trace.csv", out / "trace.png")
        plot_grid(out / "heatmap.csv", out / "heatmap.png", "buffer ON ratio", "viridis", "ratio")
    _manifest(args, "optimize", path, {"greedy": args.seed},
              {"greedy": cfg, "quantizer": _quantizer(args.bits)})
    print(f"best SI {tr.best_value:.2f} dB after {len(tr)} measurements "
          f"(all-off {m(np.zeros(s.irs.shape, np.uint8)):.2f} dB)")
    return 0


def _convergence_job(job):
    text, method, seed, budget, bits, buffer_len, patience = job
    s = parse_scenario(text)
    m = SimulatedMeasurement(s, _quantizer(bits))
    if method == "random":
        tr = random_search(budget, m, np.random.default_rng(seed))
    else:
        cfg = GreedyConfig(buffer_len=buffer_len, patience=patience, max_iterations=budget,
                           weighting=method, rng_seed=seed)
        tr = greedy_optimize(cfg, m)
    heat = tr.buffers.heatmap() if tr.buffers is not None else None
    return method, seed, tr.cumulative_min, heat


def cmd_convergence(args) -> int:
    path, s = _scenario(args)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.budget < args.buffer_len:
        raise UsageError(f"--budget {args.budget} is smaller than the buffer length "
                         f"{args.buffer_len}; initialization alone needs {args.buffer_len} measurements")
    text = serialize_scenario(s)
    methods = ("linear", "uniform", "random")
    jobs = [(text, mth, args.seed + r, args.budget, args.bits, args.buffer_len, args.patience)
            for mth in methods for r in range(args.runs)]
    n = min(_threads(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_convergence_job, jobs))
    else:
        results = [_convergence_job(j) for j in jobs]

    curves, finals, heat = {}, {}, None
    for mth in methods:
        cms = [r[2] for r in results if r[0] == mth]
        n_it = max(len(c) for c in cms)
        padded = np.array([np.pad(c, (0, n_it - len(c)), mode="edge") for c in cms])
        curves[mth] = padded.mean(axis=0)
        finals[mth] = cms
    heat = next(r[3] for r in results if r[0] == "linear")
    thr = max(c[-1] for mth in ("linear", "uniform") for c in finals[mth])
    med = {mth: float(np.median([iterations_to_threshold(c, thr) for c in finals[mth]]))
           for mth in methods}

    rows = [(mth, i, float(v)) for mth in methods for i, v in enumerate(curves[mth])]
    out = Path(args.out)
    write_results([Table("convergence", CONVERGENCE_HEADER, rows),
                   Table("heatmap", HEATMAP_HEADER, grid_rows(heat))], out)
    if _plots(args):
        from .plots import plot_convergence, plot_grid

        plot_convergence(out / "convergence.csv", out / "convergence.png")
        plot_grid(out / "heatmap.csv", out / "heatmap.png", "buffer ON ratio", "viridis", "ratio")
    _manifest(args, "convergence", path, {"first_run": args.seed},
              {"runs": args.runs, "budget": args.budget, "bits": args.bits,
               "buffer_len": args.buffer_len, "patience": args.patience})
    print(f"threshold {thr:.2f} dB; median iterations to threshold: " + ", ".join(
        f"{mth} {'never' if math.isinf(med[mth]) else int(med[mth])}" for mth in methods))
    for mth in methods:
        c = curves[mth]
        print(f"{mth}: {c[0]:.2f} -> {c[-1]:.2f} dB (improvement {c[0] - c[-1]:.2f} dB)")
    return 0


def _breath_rows(stages, truth: PhaseSeries | None):
    filt = stages.filtered
    t = filt.times
    raw = np.interp(t, stages.unwrapped.times, stages.unwrapped.samples)
    gt = np.full(t.shape, np.nan)
    if truth is not None:
        gt = np.interp(t, truth.times, normalize_ground_truth(truth).samples)
    return [(float(a), float(np.degrees(b)), float(np.degrees(c)), float(d))
            for a, b, c, d in zip(t, raw, filt.samples, gt)]


def _report(stages, out: Path, truth, args) -> None:
    res = stages.result
    write_results([Table("breath_trace", BREATH_TRACE_HEADER, _breath_rows(stages, truth)),
                   Table("detection", ("rate_hz", "confidence", "peak_to_trough_deg", "detected"),
                         [(res.rate_hz, res.confidence, res.peak_to_trough_deg, res.detected)])], out)
    if _plots(args):
        from .plots import plot_breath

        plot_breath(out / "breath_trace.csv", out / "breath_trace.png")
    verdict = "detected" if res.detected else "not detected"
    print(f"breathing {verdict}: rate {res.rate_hz:.3f} Hz, confidence {res.confidence:.2f} "
          f"(threshold {DETECTION_THRESHOLD}), peak-to-trough {res.peak_to_trough_deg:.1f} deg")


def _impairments(args) -> ImpairmentParams:
    return ImpairmentParams(synchronized=args.sync is not False)


def cmd_track(args) -> int:
    path, s = _scenario(args)
    pattern_path = resolve_input(args.pattern)
    pattern = load_pattern(pattern_path)
    if s.breath_path is None:
        raise ConfigError("scenario has no breath_path", "breath_path")
    if not 0 <= args.subcarrier < s.n_subcarriers:
        raise UsageError(f"--subcarrier must be in [0, {s.n_subcarriers})")
    state, _ = _resolve_state(args.state, s, args)
    imp, q = _impairments(args), _quantizer(args.bits)
    chest = synth_chest_displacement(pattern, args.packet_rate)
    csi = synthesize_csi_arrays(s, state, chest, args.packet_rate, imp, q,
                                np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "state.txt").write_text(format_state(state))
    if args.save_stream:
        write_csi_stream((CsiRecord(i, float(csi.timestamps[i]), float(csi.rssi_db[i]), csi.h[i])
                          for i in range(len(csi))), args.save_stream)
    stages = process_phase(csi.phase(args.subcarrier))
    _report(stages, out, chest, args)
    seeds = {"stream": args.seed}
    if args.state == "optimize":
        seeds["greedy"] = args.seed
    _manifest(args, "track", path, seeds,
              {"state": args.state, "impairments": imp, "quantizer": q, "pattern": pattern,
               "packet_rate_hz": args.packet_rate, "subcarrier": args.subcarrier},
              {"pattern": str(pattern_path)})
    return 0


def cmd_replay(args) -> int:
    stream = Path(args.stream)
    if not stream.exists():
        raise FileNotFoundError(f"no such file: {stream}")
    t, ph = read_subcarrier_phase(stream, args.subcarrier)
    if t.shape[0] < 2:
        raise ValueError(f"stream has {t.shape[0]} record(s); too short to estimate a breathing rate")
    stages = process_phase(phase_series(t, ph))
    truth = None
    inputs = {}
    if args.ground_truth:
        _, rows = read_table(args.ground_truth)
        gt_t = np.array([float(r[0]) for r in rows])
        gt_v = np.array([float(r[1]) for r in rows])
        rate = (len(gt_t) - 1) / (gt_t[-1] - gt_t[0])
        truth = PhaseSeries(rate, gt_v, float(gt_t[0]))
        inputs["ground_truth"] = args.ground_truth
    out = Path(args.out)
    _report(stages, out, truth, args)
    _manifest(args, "replay", None, {}, {"subcarrier": args.subcarrier},
              {"stream": str(stream), **inputs})
    return 0


def cmd_impairments_demo(args) -> int:
    if not args.duration > 0:
        raise UsageError(f"--duration must be > 0, got {args.duration}")
    if not args.packet_rate > 0:
        raise UsageError(f"--packet-rate must be > 0, got {args.packet_rate}")
    path, s = _scenario(args)
    modes = {"synchronized": True, "unsynchronized": False}
    if args.sync is not None:
        modes = {k: v for k, v in modes.items() if v == args.sync}
    n = int(round(args.duration * args.packet_rate))
    if n < 1:
        raise UsageError("duration too short for a single packet")
    still = PhaseSeries(args.packet_rate, np.zeros(n))
    state = np.zeros(s.irs.shape, dtype=np.uint8)
    rows, summary = [], []
    for i, (mode, sync) in enumerate(modes.items()):
        rng = np.random.default_rng([args.seed, i])
        csi = synthesize_csi_arrays(s, state, still, args.packet_rate,
                                    ImpairmentParams(synchronized=sync), _quantizer(args.bits), rng)
        ph = np.angle(csi.h[:, args.subcarrier])
        rows.extend((mode, k, float(csi.timestamps[k]), float(ph[k])) for k in range(len(ph)))
        summary.append((mode, fraction_within(ph, SCATTER_HALF_WIDTH), resultant_length(ph)))
    out = Path(args.out)
    write_results([Table("impairments", IMPAIRMENT_HEADER, rows),
                   Table("impairments_summary", ("mode", "fraction_within_60deg", "resultant_length"),
                         summary)], out)
    if _plots(args):
        from .plots import plot_impairments

        plot_impairments(out / "impairments.csv", out)
    _manifest(args, "impairments-demo", path, {"stream": args.seed},
              {"duration_s": args.duration, "packet_rate_hz": args.packet_rate,
               "modes": list(modes), "bits": args.bits})
    for mode, frac, r in summary:
        print(f"{mode}: {100 * frac:.1f}% of packets within +-60 deg of the circular mean, "
              f"resultant length {r:.3f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irsbreath", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, scenario="canonical"):
        sp.add_argument("--scenario", default=scenario,
                        help=f"scenario JSON file or shipped name (default: {scenario})")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, default=0, help="base random seed (default: 0)")
        sp.add_argument("--no-plot", action="store_true", help="write CSVs only")

    def sync_flags(sp, default):
        sp.add_argument("--sync", dest="sync", action="store_true", default=default,
                        help="shared LO between transmitter and receiver")
        sp.add_argument("--no-sync", dest="sync", action="store_false")

    sp = sub.add_parser("phase-pattern", help="ideal element phases and their binary projection")
    common(sp, "phase_pattern")
    sp.add_argument("--round-trip-phase", action="store_true",
                    help="use twice the element distance as the path length")
    sp.add_argument("--threshold", type=float, default=0.0,
                    help="projection threshold phase in radians (default: 0)")
    sp.set_defaults(func=cmd_phase_pattern)

    sp = sub.add_parser("optimize", help="one greedy run on the simulated measurement")
    common(sp)
    sp.add_argument("--weighting", choices=("linear", "uniform"), default="linear")
    sp.add_argument("--budget", type=int, default=None, help="maximum number of measurements")
    sp.add_argument("--patience", type=int, default=500)
    sp.add_argument("--buffer-len", type=int, default=100)
    sp.add_argument("--bits", type=int, default=10, help="CSI quantizer bits; 0 disables")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("convergence", help="averaged convergence of weighted, unweighted and random search")
    common(sp)
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--budget", type=int, default=2500)
    sp.add_argument("--patience", type=int, default=500)
    sp.add_argument("--buffer-len", type=int, default=100)
    sp.add_argument("--bits", type=int, default=10, help="CSI quantizer bits; 0 disables")
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("track", help="simulate breathing and recover it from the CSI phase")
    common(sp)
    sp.add_argument("--pattern", default="breath_hold",
                    help="breath pattern JSON file or shipped name (default: breath_hold)")
    sp.add_argument("--state", default="optimize",
                    help="all-off, all-on, optimize or file:<path> (default: optimize)")
    sp.add_argument("--weighting", choices=("linear", "uniform"), default="linear")
    sp.add_argument("--subcarrier", type=int, default=25)
    sp.add_argument("--packet-rate", type=float, default=400.0)
    sp.add_argument("--bits", type=int, default=10, help="CSI quantizer bits; 0 disables")
    sp.add_argument("--save-stream", default=None, help="also write the CSI stream to this file")
    sync_flags(sp, True)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("replay", help="run the breath pipeline on a recorded CSI stream")
    sp.add_argument("stream", help="CSI stream file")
    sp.add_argument("--out", default="out")
    sp.add_argument("--subcarrier", type=int, default=25)
    sp.add_argument("--ground-truth", default=None,
                    help="CSV with time_s and chest displacement columns")
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("impairments-demo", help="phase scatter with and without LO synchronization")
    common(sp)
    sp.add_argument("--duration", type=float, default=10.0)
    sp.add_argument("--packet-rate", type=float, default=400.0)
    sp.add_argument("--subcarrier", type=int, default=25)
    sp.add_argument("--bits", type=int, default=10, help="CSI quantizer bits; 0 disables")
    sync_flags(sp, None)
    sp.set_defaults(func=cmd_impairments_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError, ValueError, IndexError) as e:
        print(f"irsbreath: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"irsbreath: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
