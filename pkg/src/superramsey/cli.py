"""Command-line entry point.

    superramsey simulate  [-c run.toml]
    superramsey ramsey    [-c run.toml] [--t-free-us T] [--delta-hz D]
    superramsey sweep     [-c run.toml] [--jobs N]
    superramsey lock      [-c run.toml] [--jobs N]
    superramsey validate  [-c run.toml]
    superramsey fit       trace.csv --t0-us T0
    superramsey config    (print the default configuration)

Exit status: 0 success, 2 configuration error, 3 numeric failure, 4 fit failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import default_config, load
from .errors import (ConfigError, DimensionCap, FitError, NumericError, OutOfRange,
                     SuperRamseyError, ZeroDrive)
from .fitting import fit_gaussian_pulse
from .model import TWO_PI
from .oracle import compare_meanfield, single_drive_config
from .protocols import characterize, frequency_lock_run, ramsey, run_protocol, spectroscopy_sweep

log = logging.getLogger("superramsey")

OUTPUT_ENV = "SUPERRAMSEY_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4

TRAJECTORY_COLUMNS = ["t_s", "n_phot", "re_a", "im_a", "s22_1", "s22_2", "jbar_plus",
                      "mbar_plus", "jbar_minus", "mbar_minus", "ax_plus", "ay_plus", "az_plus",
                      "ax_minus", "ay_minus", "az_minus"]
SWEEP_COLUMNS = ["delta_hz", "phi_rad", "i_int", "i_max", "t_delay_s", "tau_s", "detected",
                 "error"]
LOCK_COLUMNS = ["cycle", "t_ms", "sign", "i_int", "n_atoms", "error_signal"]


def fmt(x):
    """Shortest string that round-trips to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _atomic_write(path, writer, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows):
    def writer(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return _atomic_write(path, writer)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, data):
    text = json.dumps(_clean(data), indent=2, default=_json_default, sort_keys=False)
    return _atomic_write(path, lambda fh: fh.write(text + "\n"))


def trajectory_rows(traj):
    y = traj.complex_states
    obs = traj.observables
    bp, bm = obs["bloch_plus"], obs["bloch_minus"]
    for i, t in enumerate(traj.times):
        yield (t, obs["n_phot"][i], y[i, 0].real, y[i, 0].imag, y[i, 5].real, y[i, 6].real,
               obs["jbar_plus"][i], obs["mbar_plus"][i], obs["jbar_minus"][i],
               obs["mbar_minus"][i], bp[i, 0], bp[i, 1], bp[i, 2], bm[i, 0], bm[i, 1], bm[i, 2])


class Run:
    """Collects outputs and errors of one command and persists the run record."""

    def __init__(self, command, cfg, out_dir, argv):
        self.command = command
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.record = {
            "tool": "superramsey", "version": __version__, "command": command,
            "argv": list(argv), "config": cfg.to_dict() if cfg is not None else None,
            "started": _now(), "finished": None, "outputs": {}, "errors": [],
        }

    def path(self, name):
        return self.out_dir / name

    def output(self, key, value):
        self.record["outputs"][key] = value

    def error(self, exc):
        self.record["errors"].append({"type": type(exc).__name__, "message": str(exc)})

    def close(self):
        self.record["finished"] = _now()
        write_json(self.path(f"{self.command}_record.json"), self.record)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def cmd_simulate(run, args):
    cfg = run.cfg
    params = cfg.system.to_params()
    proto = cfg.protocol.to_protocol(params)
    traj = run_protocol(params, proto, cfg.integrator.to_config(), cfg.integrator.sample_dt)
    path = write_csv(run.path("trajectory.csv"), TRAJECTORY_COLUMNS, trajectory_rows(traj))
    run.output("trajectory_csv", str(path))
    run.output("n_steps", traj.n_steps)
    char = characterize(traj, proto)
    run.output("pulse", char.to_dict())
    write_json(run.path("pulse.json"), char.to_dict())
    print(f"trajectory: {path} ({len(traj)} samples); pulse i_max={char.i_max:.6g} "
          f"t_delay={char.t_delay:.6g} s detected={char.detected}")


def cmd_ramsey(run, args):
    cfg = run.cfg
    params = cfg.system.to_params()
    t_free = (cfg.ramsey.t_free_us if args.t_free_us is None else args.t_free_us) * 1e-6
    delta_hz = cfg.ramsey.delta_hz if args.delta_hz is None else args.delta_hz
    icfg, dt = cfg.integrator.to_config(), cfg.integrator.sample_dt
    readout = cfg.ramsey.readout_us * 1e-6
    traj, char = ramsey(params, t_free, TWO_PI * delta_hz, icfg, dt, readout,
                        threshold_frac=cfg.ramsey.threshold_frac)
    path = write_csv(run.path("ramsey_trajectory.csv"), TRAJECTORY_COLUMNS, trajectory_rows(traj))
    result = dict(char.to_dict(), delta_hz=delta_hz, t_free_s=t_free,
                  phi_rad=TWO_PI * delta_hz * t_free)
    write_json(run.path("ramsey_pulse.json"), result)
    run.output("trajectory_csv", str(path))
    run.output("pulse", result)
    print(f"ramsey T={t_free:.6g} s delta={delta_hz:.6g} Hz: i_int={char.i_int:.6g} "
          f"detected={char.detected}")


def cmd_sweep(run, args):
    cfg = run.cfg
    params = cfg.system.to_params()
    s = cfg.sweep
    t_free = s.t_free_us * 1e-6
    points = spectroscopy_sweep(params, t_free, s.deltas(), cfg.integrator.to_config(),
                                cfg.integrator.sample_dt, s.readout_us * 1e-6, jobs=args.jobs,
                                threshold_frac=s.threshold_frac)
    rows = []
    for pt in points:
        c = pt.characteristics
        rows.append((pt.delta / TWO_PI, pt.phi, c.i_int, c.i_max, c.t_delay, c.tau,
                     c.detected, pt.error))
        if pt.error:
            run.record["errors"].append({"type": "SweepPoint", "message":
                                         f"delta_hz={pt.delta / TWO_PI!r}: {pt.error}"})
    path = write_csv(run.path("sweep.csv"), SWEEP_COLUMNS, rows)
    run.output("sweep_csv", str(path))
    run.output("points", len(rows))
    run.output("detected", sum(1 for r in rows if r[6]))
    print(f"sweep: {len(rows)} points, {run.record['outputs']['detected']} detected -> {path}")


def cmd_lock(run, args):
    cfg = run.cfg
    params = cfg.system.to_params()
    lock = cfg.lock.to_lock()
    result = frequency_lock_run(params, lock, cfg.integrator.to_config(),
                                cfg.integrator.sample_dt, cfg.lock.readout_us * 1e-6,
                                jobs=args.jobs)
    rows = [(s.cycle, s.time * 1e3, s.sign, s.i_int, s.n_atoms, s.error_signal)
            for s in result.samples]
    path = write_csv(run.path("lock.csv"), LOCK_COLUMNS, rows)
    run.output("lock_csv", str(path))
    run.output("error_signals", result.errors)
    print(f"lock: {lock.cycles} cycles -> {path}")


def cmd_validate(run, args):
    cfg = run.cfg
    o = cfg.oracle
    if o.n1 < 1 or o.n2 < 1:
        raise ConfigError("validate needs at least one atom in each ensemble")
    params = cfg.system.to_params()
    if o.g_hz is not None:
        params = params.replace(g=(TWO_PI * o.g_hz,) * 2)
    oc = single_drive_config(params, o.n1, o.n2, o.drive_us * 1e-6, o.total_us * 1e-6,
                             o.fock_cutoff, sample_dt=cfg.integrator.sample_dt,
                             check_cutoff=o.check_cutoff)
    report = compare_meanfield(oc, rel_tol=o.rel_tol, floor=o.floor)
    write_json(run.path("validate_report.json"), report.to_dict())
    run.output("report", report.to_dict())
    print(report.summary())


def read_trace(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t_s", "n_phot"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: needs columns t_s and n_phot")
            rows = [(float(r["t_s"]), float(r["n_phot"])) for r in reader]
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: empty trace")
    t, v = np.array(rows).T
    return t, v


def cmd_fit(run, args):
    t, v = read_trace(args.trace)
    t0 = args.t0_us * 1e-6
    hi = t[-1] if args.window_us is None else t0 + args.window_us * 1e-6
    if not t[0] <= t0 < hi <= t[-1]:
        raise OutOfRange(f"fit window [{t0!r}, {hi!r}] s is not inside the trace")
    char = fit_gaussian_pulse(t, v, t0, (t0, hi))
    write_json(run.path("fit.json"), char.to_dict())
    run.output("pulse", char.to_dict())
    print(json.dumps(_clean(char.to_dict()), default=_json_default))


COMMANDS = {"simulate": cmd_simulate, "ramsey": cmd_ramsey, "sweep": cmd_sweep,
            "lock": cmd_lock, "validate": cmd_validate, "fit": cmd_fit}


def build_parser():
    parser = argparse.ArgumentParser(prog="superramsey", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("-c", "--config", help="TOML run configuration (default: built-in operating point)")
        p.add_argument("-o", "--out", help=f"output directory (default: ${OUTPUT_ENV} or ./runs)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=int, default=None,
                       help="reserved; the dynamics are deterministic")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="run the configured protocol"))
    p = sub.add_parser("ramsey", help="single Ramsey sequence")
    common(p)
    p.add_argument("--t-free-us", type=float, default=None)
    p.add_argument("--delta-hz", type=float, default=None)
    common(sub.add_parser("sweep", help="Ramsey spectroscopy over detunings"))
    common(sub.add_parser("lock", help="frequency-lock cycle train"))
    common(sub.add_parser("validate", help="compare mean field against the exact oracle"))
    p = sub.add_parser("fit", help="fit a Gaussian pulse to a trace CSV")
    common(p, config=False)
    p.add_argument("trace", help="CSV with t_s and n_phot columns")
    p.add_argument("--t0-us", type=float, required=True, help="drive end / window start")
    p.add_argument("--window-us", type=float, default=None, help="window length (default: to end)")
    sub.add_parser("config", help="print the default configuration")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "config":
        sys.stdout.write(default_config().dumps())
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or os.environ.get(OUTPUT_ENV) or "runs"
    run = None
    try:
        cfg = None
        if args.command != "fit":
            cfg = load(args.config) if args.config else default_config()
            if args.out is None and cfg.output.directory and not os.environ.get(OUTPUT_ENV):
                out = cfg.output.directory
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        run = Run(args.command, cfg, out, argv)
        COMMANDS[args.command](run, args)
        status = EXIT_OK
    except (ConfigError, ZeroDrive, DimensionCap, OutOfRange, ValueError) as exc:
        status = EXIT_CONFIG
        _report(run, exc)
    except NumericError as exc:
        status = EXIT_NUMERIC
        _report(run, exc)
    except FitError as exc:
        status = EXIT_FIT
        _report(run, exc)
    except SuperRamseyError as exc:
        status = EXIT_NUMERIC
        _report(run, exc)
    if run is not None:
        run.record["exit_status"] = status
        run.close()
    return status


def _report(run, exc):
    print(f"error: {exc}", file=sys.stderr)
    if run is not None:
        run.error(exc)


if __name__ == "__main__":
    sys.exit(main())
