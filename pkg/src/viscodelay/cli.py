"""Command-line front end.

Exit status: 0 success, 2 invalid input, 3 divergence abort, 4 calibration
impossible (no decay or zero initial energy), 5 decay constants missing.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .certificates import DecayCalibrator, DecayConstants, certify, compare_with_trajectory
from .config import (
    DEFAULT_SCENARIO,
    SCHEMA_VERSION,
    apply_point,
    build_scenario,
    load_config,
    parse_config,
    quiet,
    scenario_hash,
)
from .dynamics import simulate
from .errors import (
    BeyondSchedule,
    CertificateError,
    Diverged,
    KernelNotExponential,
    NotDecaying,
    SimulationError,
    ValidationError,
    ZeroInitialEnergy,
)
from .model import GeometricSchedule, validate_scenario
from .reporting import write_json, write_rows_csv, write_snapshot_csv, write_trajectory_csv

log = logging.getLogger("viscodelay")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_NO_DECAY, EXIT_NO_CONSTANTS = 0, 2, 3, 4, 5


class MissingConstants(Exception):
    pass


def _load(args):
    cfg = parse_config(DEFAULT_SCENARIO) if args.scenario is None else load_config(args.scenario)
    if args.backend is not None:
        cfg["solver"]["backend"] = args.backend
    if args.stride is not None:
        cfg["solver"]["stride"] = args.stride
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run(cfg):
    """Simulate; returns (trajectory, diverged)."""
    so = cfg["solver"]
    scenario = build_scenario(cfg)
    try:
        return simulate(scenario, backend=so["backend"], stride=so["stride"]), False
    except Diverged as exc:
        return exc.trajectory, True


def _terminal(traj):
    e0 = traj.E_S[0]
    return {
        "t_end": float(traj.times[-1]),
        "E_S_initial": float(e0),
        "E_S_final": float(traj.E_S[-1]),
        "E_final": float(traj.E[-1]),
        "E_S_ratio": float(traj.E_S[-1] / e0) if e0 > 0 else math.nan,
        "E_S_max_ratio": float(traj.E_S.max() / e0) if e0 > 0 else math.nan,
    }


def cmd_simulate(args) -> int:
    cfg = _load(args)
    validate_scenario(build_scenario(cfg))
    out = _out(args)
    start = time.perf_counter()
    traj, diverged = _run(cfg)
    wall = time.perf_counter() - start
    write_trajectory_csv(out / "trajectory.csv", traj)
    if args.snapshots:
        write_snapshot_csv(out / "snapshots.csv", traj)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": scenario_hash(cfg),
        "backend": traj.backend,
        "dt": traj.dt,
        "n_samples": len(traj),
        "diverged": diverged,
        "wall_time_s": wall,
        **_terminal(traj),
    }
    write_json(out / "summary.json", summary)
    if diverged:
        print(f"divergence abort at t = {traj.times[-1]:g}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if not args.keep_schedule:
        cfg = quiet(cfg)
    traj, diverged = _run(cfg)
    if diverged:
        print("calibration run diverged", file=sys.stderr)
        return EXIT_DIVERGED
    est = DecayCalibrator(burn_in=args.burn_in).fit(traj.times, traj.E_S)
    payload = {
        **est.constants_.to_dict(),
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": scenario_hash(cfg),
        "slope": est.slope_,
        "intercept": est.intercept_,
        "burn_in": args.burn_in,
        "n_samples": len(traj),
    }
    write_json(_out(args) / "constants.json", payload)
    return EXIT_OK


def _constants(args, cfg) -> DecayConstants:
    if args.constants is not None:
        path = Path(args.constants)
        if not path.is_file():
            raise MissingConstants(f"constants file {path} not found")
        return DecayConstants.from_dict(json.loads(path.read_text()))
    if "constants" in cfg:
        return DecayConstants.from_dict(cfg["constants"])
    raise MissingConstants("no decay constants: pass --constants or add a [constants] section")


def _cycles_in_horizon(cfg, schedule):
    if isinstance(schedule, GeometricSchedule) or not schedule.periodic or not schedule.cycles:
        return None
    c = schedule.cycles[-1]
    head = sum(cy.T_even + cy.T_odd for cy in schedule.cycles[:-1])
    tail = max(cfg["solver"]["horizon"] - head, 0.0)
    return len(schedule.cycles) - 1 + max(1, math.ceil(tail / (c.T_even + c.T_odd) - 1e-9))


def _certify(cfg, constants, variant, threshold, window):
    scenario = build_scenario(cfg)
    validate_scenario(scenario)
    n = _cycles_in_horizon(cfg, scenario.schedule)
    return certify(scenario.schedule, constants, variant, threshold, n, window)


def cmd_certify(args) -> int:
    cfg = _load(args)
    constants = _constants(args, cfg)
    report = _certify(cfg, constants, args.variant, args.threshold, args.window)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": scenario_hash(cfg),
        **report.to_dict(),
    }
    if args.with_sim:
        traj, diverged = _run(cfg)
        payload["comparison"] = compare_with_trajectory(report.envelope, traj)
        payload["simulation"] = {"diverged": diverged, **_terminal(traj)}
    write_json(_out(args) / "report.json", payload)
    return EXIT_OK


SWEEP_COLUMNS = ["index", "status", "verdict", "beta", "terminal_ratio", "message"]


def _sweep_point(job):
    index, cfg, point, constants, variant = job
    row = {"index": index, **point, "status": "ok", "verdict": "", "beta": None,
           "terminal_ratio": None, "message": ""}
    try:
        cfg_p = apply_point(cfg, point)
        report = _certify(cfg_p, constants, variant, 1e-6, 0)
        row["verdict"] = report.asymptotic_verdict
        if report.exponential is not None:
            row["beta"] = report.exponential.beta
        traj, diverged = _run(cfg_p)
        row["terminal_ratio"] = float(traj.E_S[-1] / traj.E_S[0]) if traj.E_S[0] > 0 else math.nan
        if diverged:
            row["status"] = "diverged"
    except (ValidationError, CertificateError) as exc:
        row["status"] = "invalid"
        row["message"] = f"{type(exc).__name__}: {exc}"
    except SimulationError as exc:
        row["status"] = "failed"
        row["message"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args) -> int:
    cfg = _load(args)
    axes = cfg.get("sweep")
    if not axes:
        raise ValidationError("scenario has no [sweep] section")
    constants = _constants(args, cfg)
    names = list(axes)
    jobs = [
        (i, cfg, dict(zip(names, values)), constants, args.variant)
        for i, values in enumerate(itertools.product(*(axes[n] for n in names)))
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    write_rows_csv(_out(args) / "grid.csv", rows, ["index", *names, *SWEEP_COLUMNS[1:]])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH", help="scenario file (default: built-in wave scenario)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--stride", type=int, metavar="N", help="snapshot stride in steps")
    common.add_argument("--backend", choices=("dafermos", "ode"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="viscodelay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario, write trajectory.csv")
    s.add_argument("--snapshots", action="store_true", help="also write snapshots.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", parents=[common], help="fit C and alpha, write constants.json")
    s.add_argument("--keep-schedule", action="store_true",
                   help="use the file's schedule instead of forcing zero feedback")
    s.add_argument("--burn-in", type=float, default=0.0)
    s.set_defaults(func=cmd_calibrate)

    cert = argparse.ArgumentParser(add_help=False)
    cert.add_argument("--constants", metavar="PATH", help="constants.json from calibrate")
    cert.add_argument("--variant", default="auto", choices=("auto", "general", "short_delay", "anti_damp"))

    s = sub.add_parser("certify", parents=[common, cert], help="stability verdicts, write report.json")
    s.add_argument("--with-sim", action="store_true", help="append measured-vs-envelope table")
    s.add_argument("--threshold", type=float, default=1e-6)
    s.add_argument("--window", type=int, default=2, help="cycles per windowed product")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("sweep", parents=[common, cert], help="grid over [sweep] axes, write grid.csv")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, BeyondSchedule, KernelNotExponential, CertificateError) as exc:
        if isinstance(exc, (NotDecaying, ZeroInitialEnergy)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NO_DECAY
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MissingConstants as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONSTANTS
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except SimulationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
