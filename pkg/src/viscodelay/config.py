"""Scenario files: INI sections with JSON-style inline arrays.

Example (the shipped default)::

    [meta]
    schema_version = 1

    [operator]
    kind = wave_1d
    K = 16
    L = pi

    [kernel]
    form = exponential
    mu0 = 0.2
    delta = 1.0

    [schedule]
    tau = 0.5
    mode = delayed_feedback
    cycles = []

    [initial]
    position = parabola
    velocity = zero
    pre_history = constant_equal_to_initial

    [solver]
    dt = 1/512
    horizon = 40

Optional sections: ``[constants]`` (C, alpha) for certification and
``[sweep]`` (axes T_even, T_odd, bound, tau, mu0, each a list).
A ``[schedule]`` may give ``geometric = [T_even, T_odd, b0, ratio, n_cycles]``
instead of ``cycles``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import (
    Cycle,
    GeometricSchedule,
    MemoryKernel,
    OperatorSpec,
    Scenario,
    Schedule,
    build_operator,
)

SCHEMA_VERSION = 1
SWEEP_AXES = ("T_even", "T_odd", "bound", "tau", "mu0")

DEFAULT_SCENARIO = """\
[meta]
schema_version = 1

[operator]
kind = wave_1d
K = 16
L = pi

[kernel]
form = exponential
mu0 = 0.2
delta = 1.0

[schedule]
tau = 0.5
mode = delayed_feedback
cycles = []

[initial]
position = parabola
velocity = zero
pre_history = constant_equal_to_initial

[solver]
dt = 1/512
horizon = 40
"""


def _number(text: str) -> float:
    text = text.strip()
    if text.lower() == "pi":
        return math.pi
    try:
        return float(Fraction(text))
    except ValueError:
        return float(text)


def _array(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse inline array {text!r}: {exc}") from None


def parse_config(text: str) -> dict:
    """Normalized plain-dict form of a scenario file (also what gets hashed)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed scenario file: {exc}") from None
    for sec in ("operator", "kernel", "schedule", "initial", "solver"):
        if not cp.has_section(sec):
            raise ValidationError(f"scenario file lacks section [{sec}]")
    version = cp.getint("meta", "schema_version", fallback=SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version}")

    try:
        op = cp["operator"]
        operator = {"kind": op.get("kind", "wave_1d")}
        if operator["kind"] == "custom":
            operator["eigenvalues"] = [float(x) for x in _array(op["eigenvalues"])]
        else:
            operator["K"] = int(op["K"])
            operator["L"] = _number(op.get("L", "pi"))

        kn = cp["kernel"]
        kernel = {"form": kn.get("form", "exponential"), "delta": _number(kn.get("delta", "1"))}
        if kernel["form"] == "tabulated":
            kernel["table"] = [[float(a), float(b)] for a, b in _array(kn["table"])]
        else:
            kernel["mu0"] = _number(kn["mu0"])
        for key in ("s_max", "tail_tol"):
            if key in kn:
                kernel[key] = _number(kn[key])

        sc = cp["schedule"]
        schedule = {
            "tau": _number(sc["tau"]),
            "mode": sc.get("mode", "delayed_feedback"),
            "profile": sc.get("profile", "constant_at_bound"),
            "fraction": _number(sc.get("fraction", "1")),
        }
        if "geometric" in sc:
            T_even, T_odd, b0, ratio, n = _array(sc["geometric"])
            schedule["geometric"] = [float(T_even), float(T_odd), float(b0), float(ratio), int(n)]
        else:
            schedule["cycles"] = [[float(x) for x in c] for c in _array(sc.get("cycles", "[]"))]
            schedule["periodic"] = sc.getboolean("periodic", fallback=False)

        ini = cp["initial"]
        initial = {}
        for key, default in (("position", "parabola"), ("velocity", "zero")):
            raw = ini.get(key, default).strip()
            initial[key] = raw if raw in ("parabola", "zero") else [float(x) for x in _array(raw)]
        initial["pre_history"] = ini.get("pre_history", "constant_equal_to_initial")

        so = cp["solver"]
        solver = {
            "dt": _number(so.get("dt", "1/512")),
            "horizon": _number(so.get("horizon", "40")),
            "stride": int(so.get("stride", "1")),
            "backend": so.get("backend", "dafermos"),
        }
        if "history_nodes" in so:
            solver["history_nodes"] = int(so["history_nodes"])

        cfg = {
            "schema_version": version,
            "operator": operator,
            "kernel": kernel,
            "schedule": schedule,
            "initial": initial,
            "solver": solver,
        }
        if cp.has_section("constants"):
            cfg["constants"] = {k: _number(v) for k, v in cp["constants"].items()}
        if cp.has_section("sweep"):
            axes = {}
            for k, v in cp["sweep"].items():
                if k not in SWEEP_AXES:
                    raise ValidationError(f"unknown sweep axis {k!r}; choose from {SWEEP_AXES}")
                axes[k] = [float(x) for x in _array(v)]
            cfg["sweep"] = axes
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad scenario entry: {exc}") from None
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"scenario file {path} not found")
    return parse_config(path.read_text())


def scenario_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form of the parsed scenario."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def parabola_modes(K: int, L: float) -> np.ndarray:
    """Sine coefficients of x (L - x) on [0, L]."""
    k = np.arange(1, K + 1)
    return np.where(k % 2 == 1, 8 * L**2 / (math.pi**3 * k**3), 0.0)


def build_schedule(sc: dict):
    common = dict(mode=sc["mode"], profile=sc["profile"], fraction=sc["fraction"])
    if "geometric" in sc:
        T_even, T_odd, b0, ratio, n = sc["geometric"]
        return GeometricSchedule(sc["tau"], T_even, T_odd, b0, ratio, n_cycles=n, **common)
    cycles = tuple(Cycle(*c) for c in sc["cycles"])
    return Schedule(sc["tau"], cycles, periodic=sc["periodic"], **common)


def build_scenario(cfg: dict) -> Scenario:
    op = cfg["operator"]
    if op["kind"] == "custom":
        operator = OperatorSpec(tuple(op["eigenvalues"]), "custom")
    else:
        operator = build_operator(op["kind"], op["K"], op["L"])
    K = operator.size

    kn = cfg["kernel"]
    extra = {k: kn[k] for k in ("s_max", "tail_tol") if k in kn}
    if kn["form"] == "tabulated":
        s, mu = zip(*kn["table"])
        kernel = MemoryKernel.tabulated(s, mu, kn["delta"], **extra)
    elif kn["form"] == "exponential":
        kernel = MemoryKernel.exponential(kn["mu0"], kn["delta"], **extra)
    else:
        raise ValidationError(f"unknown kernel form {kn['form']!r}")

    def initial(value):
        if value == "zero":
            return np.zeros(K)
        if value == "parabola":
            return parabola_modes(K, op.get("L", math.pi))
        return np.asarray(value, dtype=float)

    ini = cfg["initial"]
    so = cfg["solver"]
    return Scenario(
        operator,
        kernel,
        build_schedule(cfg["schedule"]),
        initial(ini["position"]),
        initial(ini["velocity"]),
        pre_history=ini["pre_history"],
        dt=so["dt"],
        horizon=so["horizon"],
        history_nodes=so.get("history_nodes"),
    )


def apply_point(cfg: dict, point: dict) -> dict:
    """Copy of ``cfg`` with sweep axis values substituted (cycle fields hit every cycle)."""
    cfg = json.loads(json.dumps(cfg))
    cfg.pop("sweep", None)
    sc = cfg["schedule"]
    col = {"T_even": 0, "T_odd": 1, "bound": 2}
    for key, value in point.items():
        if key == "tau":
            sc["tau"] = value
        elif key == "mu0":
            cfg["kernel"]["mu0"] = value
        elif "geometric" in sc:
            sc["geometric"][col[key]] = value
        else:
            for c in sc["cycles"]:
                c[col[key]] = value
    return cfg


def quiet(cfg: dict) -> dict:
    """Copy of ``cfg`` with the feedback switched off everywhere."""
    cfg = json.loads(json.dumps(cfg))
    cfg["schedule"] = {**{k: cfg["schedule"][k] for k in ("tau", "mode", "profile", "fraction")},
                       "cycles": [], "periodic": False}
    return cfg


__all__ = [
    "DEFAULT_SCENARIO",
    "SCHEMA_VERSION",
    "apply_point",
    "build_scenario",
    "build_schedule",
    "load_config",
    "parabola_modes",
    "parse_config",
    "quiet",
    "scenario_hash",
]
