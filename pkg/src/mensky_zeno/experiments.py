"""Parameter sweeps reproducing the survival surface and the pulse-count scan."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .closed_form import critical_error, survival_probability
from .core import (
    UNMEASURED,
    DriveSpec,
    MeterSegment,
    StateVector,
    SystemSpec,
    regime_params,
)
from .propagator import IntegratorConfig, probabilities
from .schedules import (
    continuous,
    final_state,
    pi_pulse_duration,
    pulsed,
    rabi_period,
    run_schedule,
)

PulseCount = Union[int, str]
DEFAULT_PULSES = (1, 4, 16, 64, "continuous")


@dataclass
class Table:
    """Rows of plain Python scalars under named columns."""

    columns: tuple
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def as_dicts(self) -> list:
        return [dict(zip(self.columns, r)) for r in self.rows]


def available_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _map(fn, items, jobs: int):
    # executor.map preserves input order, so output never depends on jobs
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def de_grid(de_points: int, de_range: Sequence[float]) -> np.ndarray:
    lo, hi = de_range
    if de_points < 1:
        raise ValueError("de_points must be at least 1")
    if not (0 < lo <= hi):
        raise ValueError(f"de_range must satisfy 0 < lo <= hi, got {de_range}")
    return np.logspace(math.log10(lo), math.log10(hi), de_points)


def _two_level(gap: float, v0: float, hbar: float):
    system = SystemSpec((0.0, gap), hbar)
    return system, DriveSpec.resonant(system, v0)


@dataclass(frozen=True)
class _Fig1Task:
    x: float
    times: np.ndarray
    system: SystemSpec
    drive: DriveSpec
    tau: float
    method: str
    step: Optional[float]

    def __call__(self, _=None):
        E1 = self.system.energies[0]
        dE = self.x * critical_error(self.system, self.drive, self.tau)
        segment = MeterSegment(0.0, self.tau, E1, dE)
        if self.method == "closed_form":
            params = regime_params(self.system, self.drive, segment, self.tau)
            return np.atleast_1d(survival_probability(params, self.times))
        traj = run_schedule(
            StateVector.basis(0, 2),
            self.system,
            self.drive,
            continuous(self.tau, E1, dE),
            "rk4",
            IntegratorConfig(step=self.step),
            sample_times=self.times,
        )
        lookup = {t: probabilities(s)[0] for t, s in traj}
        return np.array([lookup[float(t)] for t in self.times])


def _call(task):
    return task()


def fig1_surface(
    t_points: int = 200,
    de_points: int = 100,
    de_range: Sequence[float] = (0.1, 10.0),
    gap: float = 1.0,
    v0: float = 1.0,
    hbar: float = 1.0,
    tau: Optional[float] = None,
    method: str = "closed_form",
    step: Optional[float] = None,
    jobs: int = 1,
) -> Table:
    """Survival probability on a (delta_E / delta_E_crit, t) grid.

    Continuous measurement with record ``E = E_1``, resonant drive, start in
    ``|1>``. Times run uniformly over ``[0, tau]`` (``tau`` defaults to
    ``2 pi hbar / v0``). Rows are ordered with delta_E outer, t inner.
    """
    if t_points < 1:
        raise ValueError("t_points must be at least 1")
    method = method.replace("-", "_")
    system, drive = _two_level(gap, v0, hbar)
    if tau is None:
        tau = 2 * math.pi * hbar / v0
    if not tau > 0:
        raise ValueError("tau must be positive")
    xs = de_grid(de_points, de_range)
    times = np.linspace(0.0, tau, t_points)
    tasks = [_Fig1Task(float(x), times, system, drive, tau, method, step) for x in xs]
    results = _map(_call, tasks, jobs)
    table = Table(("de_over_decrit", "t", "p1"))
    for x, p1 in zip(xs, results):
        table.rows.extend((float(x), float(t), float(p)) for t, p in zip(times, p1))
    return table


@dataclass(frozen=True)
class _Fig2Task:
    n: PulseCount
    x: float
    system: SystemSpec
    drive: DriveSpec
    duty: float
    method: str
    step: Optional[float]

    def __call__(self):
        T = pi_pulse_duration(self.system, self.drive)
        dE = self.x * critical_error(self.system, self.drive, T)
        E1 = self.system.energies[0]
        if self.n == "continuous":
            schedule = continuous(T, E1, dE)
        else:
            schedule = pulsed(int(self.n), T, E1, dE, self.duty)
        traj = run_schedule(
            StateVector.basis(0, 2),
            self.system,
            self.drive,
            schedule,
            self.method,
            IntegratorConfig(step=self.step),
        )
        return 1.0 - float(probabilities(final_state(traj))[0])


def transition_probability(
    n: PulseCount,
    de_over_decrit: float,
    gap: float = 1.0,
    v0: float = 1.0,
    hbar: float = 1.0,
    duty: float = 1e-2,
    method: str = "closed_form",
    step: Optional[float] = None,
) -> float:
    """P(1 -> 2) at the end of a resonant pi pulse under ``n`` measurement pulses.

    ``delta_E`` is given in units of ``delta_E_crit`` evaluated at the pi-pulse
    duration ``T = pi hbar / (2 v0)``. ``n="continuous"`` measures throughout.
    """
    system, drive = _two_level(gap, v0, hbar)
    return _Fig2Task(n, de_over_decrit, system, drive, duty, method.replace("-", "_"), step)()


def fig2_pulse_scan(
    pulse_counts: Sequence[PulseCount] = DEFAULT_PULSES,
    de_points: int = 100,
    de_range: Sequence[float] = (0.1, 10.0),
    gap: float = 1.0,
    v0: float = 1.0,
    hbar: float = 1.0,
    duty: float = 1e-2,
    method: str = "closed_form",
    step: Optional[float] = None,
    jobs: int = 1,
) -> Table:
    """Transition probability after a pi pulse versus normalized measurement error.

    One row group per entry of ``pulse_counts``, delta_E inner.
    """
    if not pulse_counts:
        raise ValueError("pulse_counts is empty")
    for n in pulse_counts:
        if n != "continuous" and (int(n) != n or n < 1):
            raise ValueError(f"invalid pulse count {n!r}")
    system, drive = _two_level(gap, v0, hbar)
    T = pi_pulse_duration(system, drive)
    for n in pulse_counts:
        if n != "continuous":
            # fail before spawning any work
            pulsed(int(n), T, 0.0, UNMEASURED, duty)
    xs = de_grid(de_points, de_range)
    method = method.replace("-", "_")
    tasks = [
        _Fig2Task(n, float(x), system, drive, duty, method, step) for n in pulse_counts for x in xs
    ]
    results = _map(_call, tasks, jobs)
    table = Table(("pulses", "de_over_decrit", "p12"))
    table.rows.extend((task.n, task.x, p) for task, p in zip(tasks, results))
    return table


def regime_report(
    gap: float = 1.0,
    v0: float = 1.0,
    hbar: float = 1.0,
    tau: Optional[float] = None,
    delta_E: Optional[float] = None,
    de_over_decrit: Optional[float] = None,
) -> dict:
    """Classify a continuously measured resonant two-level system.

    Give either an absolute ``delta_E`` or ``de_over_decrit``; neither means
    unmeasured. ``rabi_period`` is the unmeasured population period
    ``pi hbar / v0``; ``damped_period`` is ``pi / Re(w)`` when underdamped.
    """
    system, drive = _two_level(gap, v0, hbar)
    if tau is None:
        tau = 2 * math.pi * hbar / v0
    dcrit = critical_error(system, drive, tau)
    if delta_E is not None and de_over_decrit is not None:
        raise ValueError("give delta_E or de_over_decrit, not both")
    if de_over_decrit is not None:
        delta_E = de_over_decrit * dcrit
    segment = MeterSegment(0.0, tau, 0.0, UNMEASURED if delta_E is None else delta_E)
    params = regime_params(system, drive, segment, tau)
    w = params.w
    underdamped = params.regime.value == "underdamped"
    return {
        "delta_E_crit": dcrit,
        "delta_E": None if delta_E is None else float(delta_E),
        "regime": params.regime.value,
        "w_re": w.real,
        "w_im": w.imag,
        "Omega": params.Omega,
        "p": params.p,
        "rabi_period": rabi_period(system, drive),
        "damped_period": math.pi / w.real if underdamped else None,
    }


def dominant_period(t: np.ndarray, signal: np.ndarray) -> float:
    """Mean spacing of the interior local maxima of ``signal``."""
    s = np.asarray(signal)
    interior = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1
    if interior.size < 2:
        raise ValueError("fewer than two peaks; extend the time window")
    peaks = np.asarray(t)[interior]
    return float(np.mean(np.diff(peaks)))


def harmonic_distortion(de_over_decrit: float, periods: int = 8, samples_per_period: int = 256) -> float:
    """Relative weight of overtones in the survival probability.

    Underdamped ``P1`` is exactly periodic with period ``pi / w``. Over a whole
    number of periods its spectrum sits on harmonics of that frequency; a pure
    ``cos^2`` has only the fundamental. Returns
    ``sqrt(sum_{k>=2} |X_k|^2) / |X_1|``.
    """
    system, drive = _two_level(1.0, 1.0, 1.0)
    # Omega = p / x^2 whatever tau is, so the window can be exactly `periods` long
    w_sq = 1.0 - de_over_decrit**-4
    if w_sq <= 0:
        raise ValueError("harmonic distortion is only defined for underdamped motion")
    period = math.pi / math.sqrt(w_sq)
    tau = periods * period
    dE = de_over_decrit * critical_error(system, drive, tau)
    params = regime_params(system, drive, MeterSegment(0.0, tau, 0.0, dE), tau)
    n = periods * samples_per_period
    t = np.arange(1, n + 1) * (period * periods / n)
    spectrum = np.abs(np.fft.rfft(survival_probability(params, t)))
    harmonics = spectrum[periods::periods]
    return float(np.sqrt(np.sum(harmonics[1:] ** 2)) / harmonics[0])
