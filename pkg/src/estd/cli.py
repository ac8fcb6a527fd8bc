"""``estd`` command line: compile, audit, run, sweep, analyze, decode.

Exit codes: 0 success, 1 runtime failure (audit failure, divergence),
2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from estd.analysis import (
    TraceParseError,
    analyze,
    compare_conditions,
    dominant_frequency,
    moving_average_detrend,
    read_accel_csv,
)
from estd.array import PulseSchedule
from estd.charge import check_compliance, check_safety
from estd.compiler import compile_electroadhesion, compile_electrotactile, schedule_stats
from estd.config import SECTIONS, ConfigError, ExperimentConfig, load_config
from estd.protocol import ProtocolError, decode_schedule, encode_schedule, validate_for_device
from estd.sim import DivergenceError, StepSizeError, simulate, synthesize_experiment

log = logging.getLogger("estd")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _emit(pairs: dict, quiet: bool = False, stream=None) -> str:
    text = "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs.items())
    if not quiet:
        (stream or sys.stdout).write(text)
    return text


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    if v is None:
        return "none"
    return str(v)


# config handling

def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    for key, value in vars(args).items():
        if key.startswith("cfg:") and value is not None:
            cfg.set(key[4:], value)
    if getattr(args, "pattern", None):
        cfg.set("electroadhesion.pattern", args.pattern)
    if args.seed is not None:
        cfg.experiment.seed = args.seed
    if args.out is not None:
        cfg.experiment.out_dir = args.out
    cfg.validate()
    return cfg


def build_schedule(cfg: ExperimentConfig) -> PulseSchedule:
    geometry = cfg.array_geometry()
    if cfg.experiment.mode == "electrotactile":
        return compile_electrotactile(cfg.electrotactile_params(), geometry)
    return compile_electroadhesion(cfg.electroadhesion_params(), geometry)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands

def cmd_compile(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    sched = build_schedule(cfg)
    stats = schedule_stats(sched)
    audit = check_safety(sched, cfg.safety_limits())
    feas = validate_for_device(sched, cfg.device_profile())
    out = _out_dir(cfg)
    packet_path = out / "schedule.estp"
    packet_path.write_bytes(encode_schedule(sched))
    pairs = {"label": sched.label, **stats.as_dict(), "packet": str(packet_path),
             "audit": "pass" if audit.passed else "fail", "device_feasible": feas.feasible}
    if stats.group_sizes:
        pairs["group_sizes"] = f"{stats.group_sizes[0]}/{stats.group_sizes[1]}"
    _emit(pairs, args.quiet)
    for v in audit.violations:
        log.warning("%s", v)
    for issue in feas.issues:
        log.warning("%s", issue)
    if not audit.passed and not args.allow_unbalanced:
        return EXIT_FAIL
    return EXIT_OK


def _load_schedule_arg(args: argparse.Namespace) -> tuple[PulseSchedule, ExperimentConfig]:
    cfg = _config_from_args(args)
    if getattr(args, "packet", None):
        data = sys.stdin.buffer.read() if args.packet == "-" else Path(args.packet).read_bytes()
        return decode_schedule(data, cfg.array_geometry()), cfg
    return build_schedule(cfg), cfg


def cmd_audit(args: argparse.Namespace) -> int:
    sched, cfg = _load_schedule_arg(args)
    report = check_safety(sched, cfg.safety_limits())
    pairs = {"audit": "pass" if report.passed else "fail", "violations": len(report.violations)}
    if report.charge is not None:
        pairs["max_abs_net_uC"] = report.charge.max_abs_net_uC
        pairs["max_instantaneous_imbalance_uC"] = report.charge.max_instantaneous_imbalance_uC
        pairs["total_net_uC"] = report.charge.total_uC
    _emit(pairs, args.quiet)
    for line in report.lines():
        print(line, file=sys.stderr)
    if args.csv and report.charge is not None:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "net_uC"])
            for e, q in sorted(report.charge.per_electrode_net_uC.items()):
                w.writerow([e.row, e.col, f"{q:.12g}"])
    return EXIT_OK if report.passed else EXIT_FAIL


def run_experiment(cfg: ExperimentConfig, out: Path, gnuplot: bool = False) -> dict:
    """Simulate the stimulated and baseline conditions and write traces and report."""
    ex = cfg.experiment
    geometry = cfg.array_geometry()
    common = dict(
        skin=cfg.skin_model(), mech=cfg.mech_model(), traj=cfg.finger_trajectory(),
        duration_s=ex.duration_s, dt_s=ex.dt_s, noise_sigma_G=ex.noise_sigma_G, seed=ex.seed,
        geometry=geometry, compliance_V=cfg.safety.max_compliance_V,
    )
    report: dict = {"mode": ex.mode, "seed": ex.seed}
    base = synthesize_experiment(None, **common)
    base.write_csv(out / "trace_baseline.csv")
    base_series = base.accel_series()

    if ex.mode == "baseline":
        r = analyze(base_series, ex.detrend_window_s)
        report.update(rms_base=r.rms_G, dominant_freq_hz=r.dominant_freq_hz)
    else:
        if ex.mode == "electroadhesion":
            stim = synthesize_experiment(cfg.electroadhesion_params(), **common)
        else:
            sched = compile_electrotactile(cfg.electrotactile_params(), geometry)
            stim = simulate(
                sched, common["skin"], common["mech"], common["traj"], ex.dt_s, ex.duration_s,
                cfg.safety.max_compliance_V,
            ).with_noise(ex.noise_sigma_G, ex.seed)
        stim.write_csv(out / "trace_stim.csv")
        cmp = compare_conditions(stim.accel_series(), base_series, ex.detrend_window_s)
        detr = moving_average_detrend(stim.accel_series(), ex.detrend_window_s)
        report.update(
            rms_stim=cmp.rms_stim,
            rms_base=cmp.rms_base,
            ratio=cmp.ratio,
            dominant_freq_hz=dominant_frequency(detr),
            peak_v_drive_V=float(np.max(stim.v_drive_V)),
            force_rms_N=rms_of(stim.force_N),
            clamped_steps=stim.clamped_steps,
            compliance_violations=len(check_compliance(stim.v_drive_V, cfg.safety_limits())),
        )
    (out / "report.txt").write_text(_emit(report, quiet=True))
    (out / "config_used.ini").write_text(cfg.to_ini())
    if gnuplot:
        (out / "plot.gp").write_text(_gnuplot_script(ex.mode != "baseline"))
    return report


def rms_of(x: np.ndarray) -> float:
    return math.sqrt(float(np.dot(x, x)) / len(x)) if len(x) else 0.0


def _gnuplot_script(with_stim: bool) -> str:
    plots = []
    if with_stim:
        plots.append("'trace_stim.csv' using 1:5 with lines title 'stimulated'")
    plots.append("'trace_baseline.csv' using 1:5 with lines title 'baseline'")
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 't [s]'\nset ylabel 'acceleration [G]'\n"
        f"plot {', '.join(plots)}\n"
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg, _out_dir(cfg), gnuplot=args.gnuplot_script)
    _emit(report, args.quiet)
    return EXIT_OK


def _sweep_one(job: tuple[ExperimentConfig, str, str, str]) -> dict:
    cfg, axis, value, out = job
    row: dict = {"value": value}
    try:
        cfg.set(axis, value)
        cfg.validate()
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        rep = run_experiment(cfg, path)
        for key in ("rms_stim", "rms_base", "ratio", "force_rms_N", "peak_v_drive_V", "dominant_freq_hz"):
            row[key] = rep.get(key)
        row["error"] = ""
    except (ValueError, RuntimeError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


SWEEP_COLUMNS = ("value", "rms_stim", "rms_base", "ratio", "force_rms_N", "peak_v_drive_V", "dominant_freq_hz", "error")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    axis = args.axis
    current = cfg.get(axis)
    if isinstance(current, bool) or not (current is None or isinstance(current, (int, float))):
        raise ConfigError("sweep axis must be a numeric key", key=axis)
    values = [v.strip() for v in args.values.split(",") if v.strip()] if args.values else []
    out = _out_dir(cfg)
    jobs = [(cfg.copy(), axis, v, str(out / f"{axis}={v}")) for v in values]
    if args.workers == 1 or len(jobs) <= 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    summary = out / "sweep_summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("axis",) + SWEEP_COLUMNS)
        for row in rows:
            w.writerow([axis] + [_fmt(row.get(c)) if row.get(c) is not None else "" for c in SWEEP_COLUMNS])
    _emit({"summary": str(summary), "runs": len(rows), "failed": sum(1 for r in rows if r["error"])}, args.quiet)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    series = read_accel_csv(args.trace)
    r = analyze(series, args.window_s, args.detrend_mode)
    _emit(r.as_dict(), args.quiet)
    if args.detrended_csv:
        with open(args.detrended_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "accel_G"])
            for t, a in zip(r.detrended.t, r.detrended.samples):
                w.writerow([f"{t:.12g}", f"{a:.12g}"])
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    data = sys.stdin.buffer.read() if args.packet == "-" else Path(args.packet).read_bytes()
    sched = decode_schedule(data)
    g = sched.geometry
    out = sys.stdout
    out.write(f"geometry = {g.rows}x{g.cols}\nframes = {len(sched)}\ntotal_duration_us = {sched.total_duration_us}\n")
    symbol = {"SOURCE": "S", "GROUND": "G", "FLOATING": "."}
    for k, fr in enumerate(sched.frames):
        out.write(f"frame {k}: duration_us={fr.duration_us} amplitude_mA={fr.amplitude_mA:g}\n")
        if not args.brief:
            for r in range(g.rows):
                row = fr.roles[r * g.cols : (r + 1) * g.cols]
                out.write("  " + "".join(symbol[x.name] for x in row) + "\n")
    return EXIT_OK


# parser

def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="experiment config file (INI sections, key = value)")
    p.add_argument("--out", help="output directory (experiment.out_dir)")
    p.add_argument("--seed", type=int, help="noise seed (experiment.seed)")
    p.add_argument("--quiet", action="store_true", help="suppress stdout report")
    return p


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("config overrides (one flag per config key)")
    for section, cls in SECTIONS.items():
        for f in cls.__dataclass_fields__.values():
            g.add_argument(f"--{section}.{f.name}", dest=f"cfg:{section}.{f.name}", metavar="VALUE")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="estd", description="Electrostatic tactile display toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    gf, cf = _global_flags(), _config_flags()

    p = sub.add_parser("compile", parents=[gf, cf], help="compile the configured pattern to an .estp packet")
    p.add_argument("--pattern", help="partition pattern: row_alternate or checkerboard")
    p.add_argument("--allow-unbalanced", action="store_true", help="exit 0 even if the safety audit fails")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("audit", parents=[gf, cf], help="charge and safety audit")
    p.add_argument("--packet", help="audit an .estp file ('-' for stdin) instead of the configured pattern")
    p.add_argument("--pattern", help="partition pattern: row_alternate or checkerboard")
    p.add_argument("--csv", help="write per-electrode net charge CSV")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("run", parents=[gf, cf], help="simulate stimulated and baseline recordings")
    p.add_argument("--pattern", help="partition pattern: row_alternate or checkerboard")
    p.add_argument("--gnuplot-script", action="store_true", help="also write plot.gp")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[gf, cf], help="run once per value of one numeric config key")
    p.add_argument("--axis", required=True, help="dotted config key, e.g. electroadhesion.current_mA")
    p.add_argument("--values", default="", help="comma-separated values")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p.add_argument("--pattern", help="partition pattern: row_alternate or checkerboard")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", parents=[gf], help="detrend, RMS and spectral peak of a trace CSV")
    p.add_argument("trace", help="trace CSV (t_s and accel_G columns)")
    p.add_argument("--window-s", type=float, default=0.2, help="moving-average window in seconds")
    p.add_argument("--detrend-mode", choices=("centered", "trailing"), default="centered")
    p.add_argument("--detrended-csv", help="write the detrended series")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("decode", parents=[gf], help="dump an .estp packet")
    p.add_argument("packet", help=".estp file or '-' for stdin")
    p.add_argument("--brief", action="store_true", help="omit per-frame role maps")
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ProtocolError, TraceParseError, StepSizeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        # invalid pattern parameters (alignment, timing, partition)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
