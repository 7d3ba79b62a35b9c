"""Command-line entry point: ``mensky-zeno {fig1,fig2,evolve,regime}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import experiments
from .core import (
    UNMEASURED,
    DriveKind,
    DriveSpec,
    MeasurementSchedule,
    MeterSegment,
    NumericalError,
    ScheduleError,
    StateVector,
    SystemSpec,
    validate_schedule,
)
from .propagator import IntegratorConfig
from .schedules import continuous, pulsed, run_schedule, stroboscopic_qnd

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_delta_E = {"anyOf": [_positive, {"type": "null"}, {"const": "unmeasured"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "system", "schedule"],
    "properties": {
        "version": {"const": 1},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["energies"],
            "properties": {
                "energies": {"type": "array", "items": _number, "minItems": 2},
                "hbar": _positive,
            },
        },
        "drive": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": [k.value for k in DriveKind]},
                "v0": {"type": "number", "minimum": 0},
                "omega": _number,
                "t0": _number,
                "matrix": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["real"],
                    "properties": {
                        "real": {"type": "array", "items": {"type": "array", "items": _number}},
                        "imag": {"type": "array", "items": {"type": "array", "items": _number}},
                    },
                },
            },
        },
        "schedule": {"type": "object"},
        "initial_state": {
            "type": "array",
            "minItems": 2,
            "items": {
                "anyOf": [
                    _number,
                    {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                ]
            },
        },
        "method": {"enum": ["closed_form", "closed-form", "rk4"]},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"step": _positive, "max_steps": {"type": "integer", "minimum": 1}},
        },
        "sample_interval": _positive,
        "tau_convention": {"enum": ["total", "per-segment"]},
    },
}

_SEGMENT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["t_start", "t_end"],
    "properties": {"t_start": _number, "t_end": _number, "E": _number, "delta_E": _delta_E},
}

SCHEDULE_SCHEMAS = {
    None: {
        "type": "object",
        "additionalProperties": False,
        "required": ["segments"],
        "properties": {"segments": {"type": "array", "items": _SEGMENT, "minItems": 1}, "tau": _positive},
    },
    "continuous": {
        "type": "object",
        "additionalProperties": False,
        "required": ["preset", "tau"],
        "properties": {"preset": {}, "tau": _positive, "E": _number, "delta_E": _delta_E},
    },
    "pulsed": {
        "type": "object",
        "additionalProperties": False,
        "required": ["preset", "n", "T"],
        "properties": {
            "preset": {},
            "n": {"type": "integer", "minimum": 1},
            "T": _positive,
            "duty": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "E": _number,
            "delta_E": _delta_E,
        },
    },
    "qnd": {
        "type": "object",
        "additionalProperties": False,
        "required": ["preset", "periods", "pulse_width"],
        "properties": {
            "preset": {},
            "periods": {"type": "integer", "minimum": 1},
            "pulse_width": _positive,
            "tail": _positive,
            "E": _number,
            "delta_E": _delta_E,
        },
    },
}


def _json_path(prefix: str, path) -> str:
    out = prefix
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _validate(instance, schema, prefix: str) -> None:
    errors = sorted(
        jsonschema.Draft202012Validator(schema).iter_errors(instance),
        key=lambda e: list(e.absolute_path),
    )
    if errors:
        err = errors[0]
        raise ConfigError(f"{_json_path(prefix, err.absolute_path)}: {err.message}")


def _delta(value):
    return UNMEASURED if value is None or value == "unmeasured" else float(value)


def build_run(config: dict):
    """Turn a parsed evolve config into ``run_schedule`` arguments."""
    _validate(config, CONFIG_SCHEMA, "$")
    sys_cfg = config["system"]
    system = SystemSpec(tuple(sys_cfg["energies"]), sys_cfg.get("hbar", 1.0))

    drv = config.get("drive", {"kind": "none"})
    kind = DriveKind(drv["kind"])
    try:
        if kind is DriveKind.RESONANT_TWO_LEVEL:
            omega = drv.get("omega", system.gap / system.hbar)
            drive = DriveSpec(kind, drv.get("v0", 0.0), omega, drv.get("t0", 0.0))
        elif kind is DriveKind.GENERAL_MATRIX:
            if "matrix" not in drv:
                raise ConfigError("$.drive.matrix: required for general_matrix drives")
            m = np.array(drv["matrix"]["real"], dtype=float)
            if "imag" in drv["matrix"]:
                m = m + 1j * np.array(drv["matrix"]["imag"], dtype=float)
            drive = DriveSpec(kind, matrix_elements=m)
        else:
            drive = DriveSpec()
        drive.check_system(system)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"$.drive: {exc}") from exc

    sched_cfg = config["schedule"]
    preset = sched_cfg.get("preset")
    if preset not in SCHEDULE_SCHEMAS:
        raise ConfigError(f"$.schedule.preset: unknown preset {preset!r}")
    _validate(sched_cfg, SCHEDULE_SCHEMAS[preset], "$.schedule")
    E = sched_cfg.get("E", system.energies[0])
    dE = _delta(sched_cfg.get("delta_E"))
    try:
        if preset is None:
            segs = []
            for i, s in enumerate(sched_cfg["segments"]):
                try:
                    segs.append(
                        MeterSegment(s["t_start"], s["t_end"], s.get("E", E), _delta(s.get("delta_E")))
                    )
                except ScheduleError as exc:
                    raise ScheduleError(str(exc), i) from exc
            schedule = validate_schedule(MeasurementSchedule(tuple(segs), sched_cfg.get("tau")))
        elif preset == "continuous":
            schedule = continuous(sched_cfg["tau"], E, dE)
        elif preset == "pulsed":
            schedule = pulsed(sched_cfg["n"], sched_cfg["T"], E, dE, sched_cfg.get("duty", 1e-2))
        else:
            schedule = stroboscopic_qnd(
                sched_cfg["periods"], sched_cfg["pulse_width"], E, dE, system, drive, sched_cfg.get("tail")
            )
    except ScheduleError as exc:
        where = "$.schedule" if exc.index is None else f"$.schedule.segments[{exc.index}]"
        raise ConfigError(f"{where}: {exc}") from exc

    if "initial_state" in config:
        amps = [complex(*a) if isinstance(a, list) else complex(a) for a in config["initial_state"]]
        if len(amps) != system.n_levels:
            raise ConfigError("$.initial_state: length must match the number of levels")
        if not any(amps):
            raise ConfigError("$.initial_state: all amplitudes are zero")
        state0 = StateVector(amps)
    else:
        state0 = StateVector.basis(0, system.n_levels)

    default_method = "closed_form" if system.n_levels == 2 and kind is not DriveKind.GENERAL_MATRIX else "rk4"
    integ = config.get("integrator", {})
    return {
        "state0": state0,
        "system": system,
        "drive": drive,
        "schedule": schedule,
        "method": config.get("method", default_method).replace("-", "_"),
        "config": IntegratorConfig(integ.get("step"), integ.get("max_steps", 10**8)),
        "tau_convention": config.get("tau_convention", "total"),
        "sample_interval": config.get("sample_interval"),
    }


def evolve_table(run: dict, sample_interval: Optional[float] = None) -> experiments.Table:
    schedule = run["schedule"]
    interval = sample_interval or run["sample_interval"]
    samples = ()
    if interval:
        count = int(math.floor(schedule.t_total / interval * (1 + 1e-12)))
        samples = [k * interval for k in range(count + 1) if k * interval <= schedule.t_total]
    traj = run_schedule(
        run["state0"],
        run["system"],
        run["drive"],
        schedule,
        run["method"],
        run["config"],
        sample_times=samples,
        tau_convention=run["tau_convention"],
    )
    n = run["system"].n_levels
    table = experiments.Table(("t",) + tuple(f"p_{i + 1}" for i in range(n)) + ("norm",))
    last_t = None
    for t, state in traj:
        # a sample that coincides with a boundary appears once
        if t == last_t:
            continue
        last_t = t
        weights = np.abs(state.amplitudes) ** 2
        total = float(weights.sum())
        table.rows.append((t, *(float(w / total) for w in weights), total))
    return table


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_table(table: experiments.Table, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(table.as_dicts(), out, indent=1, allow_nan=False)
        out.write("\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])


def _float_pair(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _pulse_list(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if item == "continuous":
            out.append(item)
            continue
        try:
            out.append(int(item))
        except ValueError:
            raise argparse.ArgumentTypeError(f"pulse counts are integers or 'continuous', got {item!r}")
    return out


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default="-", help="output path (default: stdout)")
    p.add_argument("--seedless", action="store_true",
                   help="accepted for scripting; every run is deterministic")


def _add_physics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gap", type=float, default=1.0, help="E2 - E1")
    p.add_argument("--v0", type=float, default=1.0, help="drive amplitude V0")
    p.add_argument("--hbar", type=float, default=1.0)


def _add_sweep(p: argparse.ArgumentParser) -> None:
    p.add_argument("--de-points", type=int, default=100)
    p.add_argument("--de-range", type=_float_pair, default=(0.1, 10.0),
                   help="LO,HI in units of the critical error")
    p.add_argument("--method", choices=("closed-form", "closed_form", "rk4"), default="closed-form")
    p.add_argument("--step", type=float, default=None, help="RK4 step (rk4 method only)")
    p.add_argument("--jobs", type=int, default=experiments.available_workers())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mensky-zeno",
        description="Quantum Zeno effect under continuous and pulsed energy measurement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("fig1", help="survival probability surface P1(t, dE/dE_crit)")
    p1.add_argument("--t-points", type=int, default=200)
    p1.add_argument("--tau", type=float, default=None, help="measurement time (default 2*pi*hbar/v0)")
    _add_physics(p1)
    _add_sweep(p1)
    _add_output(p1)

    p2 = sub.add_parser("fig2", help="P(1->2) after a pi pulse versus pulse count")
    p2.add_argument("--pulses", type=_pulse_list, default=list(experiments.DEFAULT_PULSES))
    p2.add_argument("--duty", type=float, default=1e-2, help="pulse width / T")
    _add_physics(p2)
    _add_sweep(p2)
    _add_output(p2)

    pe = sub.add_parser("evolve", help="single trajectory from a JSON config")
    pe.add_argument("config", help="JSON config path ('-' for stdin)")
    pe.add_argument("--method", choices=("closed-form", "closed_form", "rk4"), default=None)
    pe.add_argument("--sample-interval", type=float, default=None)
    _add_output(pe)

    pr = sub.add_parser("regime", help="classify the damping regime")
    pr.add_argument("--tau", type=float, default=None)
    group = pr.add_mutually_exclusive_group()
    group.add_argument("--delta-e", type=float, default=None)
    group.add_argument("--de-over-decrit", type=float, default=None)
    _add_physics(pr)
    _add_output(pr)
    return parser


def _check_args(parser: argparse.ArgumentParser, args) -> None:
    def positive(name, value):
        if value is not None and not (value > 0 and math.isfinite(value)):
            parser.error(f"--{name} must be positive, got {value}")

    for name in ("gap", "v0", "hbar", "tau", "step", "delta_e", "de_over_decrit", "sample_interval"):
        if hasattr(args, name):
            positive(name.replace("_", "-"), getattr(args, name))
    for name in ("t_points", "de_points", "jobs"):
        if hasattr(args, name) and getattr(args, name) < 1:
            parser.error(f"--{name.replace('_', '-')} must be at least 1")
    if hasattr(args, "de_range"):
        lo, hi = args.de_range
        if not 0 < lo <= hi:
            parser.error(f"--de-range needs 0 < LO <= HI, got {lo},{hi}")
    if hasattr(args, "duty"):
        if not 0 < args.duty <= 1:
            parser.error(f"--duty must be in (0, 1], got {args.duty}")
        for n in args.pulses:
            if n != "continuous" and (n < 1 or n * args.duty > 1 + 1e-12):
                parser.error(f"--pulses {n} with --duty {args.duty}: pulses do not fit in the pi pulse")


def _run(args) -> experiments.Table:
    if args.command == "fig1":
        return experiments.fig1_surface(
            args.t_points, args.de_points, args.de_range, args.gap, args.v0, args.hbar,
            args.tau, args.method, args.step, args.jobs,
        )
    if args.command == "fig2":
        return experiments.fig2_pulse_scan(
            args.pulses, args.de_points, args.de_range, args.gap, args.v0, args.hbar,
            args.duty, args.method, args.step, args.jobs,
        )
    if args.command == "regime":
        report = experiments.regime_report(
            args.gap, args.v0, args.hbar, args.tau, args.delta_e, args.de_over_decrit
        )
        return experiments.Table(tuple(report), [tuple(report.values())])
    text = sys.stdin.read() if args.config == "-" else open(args.config).read()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    run = build_run(config)
    if args.method:
        run["method"] = args.method.replace("-", "_")
    return evolve_table(run, args.sample_interval)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_args(parser, args)
    try:
        table = _run(args)
    except (ConfigError, ScheduleError, OSError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"{parser.prog} {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output == "-":
        write_table(table, args.format, sys.stdout)
    else:
        buf = io.StringIO()
        write_table(table, args.format, buf)
        with open(args.output, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
