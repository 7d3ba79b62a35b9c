"""Measurement strategies and chained propagation across them."""

from __future__ import annotations

import math
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .closed_form import two_level_evolve
from .core import (
    TILING_ATOL,
    UNMEASURED,
    DriveKind,
    DriveSpec,
    ErrorValue,
    MeasurementSchedule,
    MeterSegment,
    ScheduleError,
    StateVector,
    SystemSpec,
    regime_params,
    validate_schedule,
)
from .propagator import IntegratorConfig, integrate

Trajectory = List[Tuple[float, StateVector]]

METHODS = ("closed_form", "rk4")
TAU_CONVENTIONS = ("total", "per-segment")


def continuous(tau: float, E: float, delta_E: ErrorValue) -> MeasurementSchedule:
    """One measured segment ``[0, tau]``."""
    if not tau > 0:
        raise ScheduleError(f"tau must be positive, got {tau}")
    return validate_schedule(MeasurementSchedule((MeterSegment(0.0, tau, E, delta_E),), tau))


def pulsed(
    n: int, T: float, E: float, delta_E: ErrorValue, duty: float = 1e-2
) -> MeasurementSchedule:
    """``n`` measurement pulses of width ``duty * T``, the k-th starting at ``k T / n``.

    The gaps between pulses are unmeasured. Zero-length gaps (``n * duty == 1``)
    are dropped, leaving contiguous measured pulses.
    """
    if int(n) != n or n < 1:
        raise ScheduleError(f"pulse count must be a positive integer, got {n}")
    n = int(n)
    if not T > 0:
        raise ScheduleError(f"T must be positive, got {T}")
    if not 0 < duty <= 1:
        raise ScheduleError(f"duty must be in (0, 1], got {duty}")
    width = duty * T
    if n * width > T * (1 + 1e-12):
        raise ScheduleError(f"{n} pulses of width {width} do not fit in T={T}")
    segments = []
    for k in range(n):
        start = k * T / n
        next_start = (k + 1) * T / n
        end = start + width
        if next_start - end <= TILING_ATOL * max(1.0, T):
            segments.append(MeterSegment(start, next_start, E, delta_E))
        else:
            segments.append(MeterSegment(start, end, E, delta_E))
            segments.append(MeterSegment(end, next_start, E, UNMEASURED))
    # tau is n pulse widths even where snapping stretched a pulse by roundoff
    return validate_schedule(MeasurementSchedule(tuple(segments), n * width))


def rabi_period(system: SystemSpec, drive: DriveSpec) -> float:
    """Period ``pi hbar / v0`` of the unmeasured level-1 population."""
    return math.pi * system.hbar / drive.v0


def pi_pulse_duration(system: SystemSpec, drive: DriveSpec) -> float:
    """``pi hbar / (2 v0)``: full transfer 1 -> 2 without measurement."""
    return math.pi * system.hbar / (2 * drive.v0)


def stroboscopic_qnd(
    periods: int,
    pulse_width: float,
    E: float,
    delta_E: ErrorValue,
    system: SystemSpec,
    drive: DriveSpec,
    tail: Optional[float] = None,
) -> MeasurementSchedule:
    """Short pulses centred on ``k pi hbar / v0`` for ``k = 1 .. periods``.

    Those are the instants where an unmeasured resonant system starting in
    ``|1>`` is back in ``|1>``. An unmeasured ``tail`` follows the last
    period; by default it is a pi pulse, so the final population of level 2
    shows whether the monitoring disturbed the Rabi cycle.
    """
    if drive.kind is not DriveKind.RESONANT_TWO_LEVEL or system.n_levels != 2:
        raise ScheduleError("stroboscopic QND schedule needs a resonant two-level drive")
    if int(periods) != periods or periods < 1:
        raise ScheduleError(f"periods must be a positive integer, got {periods}")
    if not drive.v0 > 0:
        raise ScheduleError("stroboscopic QND schedule needs v0 > 0")
    period = rabi_period(system, drive)
    if not 0 < pulse_width < period / 2:
        raise ScheduleError(f"pulse_width must be in (0, {period / 2}), got {pulse_width}")
    if tail is None:
        tail = pi_pulse_duration(system, drive)
    if not tail > pulse_width / 2:
        raise ScheduleError("tail must extend past the last pulse")
    half = pulse_width / 2
    segments = []
    t = 0.0
    for k in range(1, int(periods) + 1):
        centre = k * period
        segments.append(MeterSegment(t, centre - half, E, UNMEASURED))
        segments.append(MeterSegment(centre - half, centre + half, E, delta_E))
        t = centre + half
    segments.append(MeterSegment(t, int(periods) * period + tail, E, UNMEASURED))
    return validate_schedule(MeasurementSchedule(tuple(segments), int(periods) * pulse_width))


def unmeasured(t_total: float) -> MeasurementSchedule:
    return validate_schedule(
        MeasurementSchedule((MeterSegment(0.0, t_total, 0.0, UNMEASURED),), t_total)
    )


def _segment_tau(schedule: MeasurementSchedule, segment: MeterSegment, convention: str) -> float:
    if convention == "per-segment" and segment.measured:
        return segment.duration
    return schedule.tau


def _normalize_method(method: str) -> str:
    method = method.replace("-", "_")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return method


def run_schedule(
    state0: StateVector,
    system: SystemSpec,
    drive: DriveSpec,
    schedule: MeasurementSchedule,
    method: str = "closed_form",
    config: IntegratorConfig = IntegratorConfig(),
    sample_times: Optional[Iterable[float]] = None,
    tau_convention: str = "total",
) -> Trajectory:
    """Carry ``state0`` through every segment of ``schedule``.

    Returns ``(time, state)`` pairs at every segment boundary plus any
    ``sample_times``, sorted by time. Within each segment the damping uses
    ``schedule.tau`` (or the segment duration with
    ``tau_convention="per-segment"``). The drive phase is global, so it runs
    uninterrupted while the meter toggles.
    """
    method = _normalize_method(method)
    if tau_convention not in TAU_CONVENTIONS:
        raise ValueError(f"unknown tau convention {tau_convention!r}")
    validate_schedule(schedule)
    drive.check_system(system)
    if method == "closed_form" and (
        system.n_levels != 2 or drive.kind is DriveKind.GENERAL_MATRIX
    ):
        raise ValueError("closed_form method needs 2 levels and a resonant (or absent) drive")

    samples = np.unique(np.asarray([] if sample_times is None else list(sample_times), dtype=float))
    t_lo, t_hi = schedule.segments[0].t_start, schedule.t_total
    if samples.size and (samples[0] < t_lo - TILING_ATOL or samples[-1] > t_hi + TILING_ATOL):
        raise ValueError(f"sample times must lie within [{t_lo}, {t_hi}]")

    state = StateVector(state0.amplitudes, t_lo)
    trajectory: Trajectory = [(t_lo, state)]
    for seg in schedule.segments:
        tau = _segment_tau(schedule, seg, tau_convention)
        inner = samples[(samples > seg.t_start) & (samples < seg.t_end)]
        if method == "closed_form":
            params = regime_params(system, drive, seg, tau)
            for ts in inner:
                trajectory.append(
                    (float(ts), two_level_evolve(state, params, system, drive, ts - seg.t_start))
                )
            state = two_level_evolve(state, params, system, drive, seg.duration)
        else:
            for ts in inner:
                state = integrate(state, system, drive, seg, tau, float(ts), config).state
                trajectory.append((float(ts), state))
            state = integrate(state, system, drive, seg, tau, seg.t_end, config).state
        # land exactly on the boundary so the next segment starts where this ends
        state = StateVector(state.amplitudes, seg.t_end)
        trajectory.append((seg.t_end, state))
    return trajectory


def final_state(trajectory: Trajectory) -> StateVector:
    return trajectory[-1][1]
