"""Domain types shared by the whole package.

Everything here is an immutable value. Energies are in energy units, times in
time units and ``hbar`` carries the action unit, so ``E / hbar`` is an angular
frequency. The natural-unit default is ``hbar = 1``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np

NORM_FLOOR = 1e-300
TILING_ATOL = 1e-12
HERMITIAN_RTOL = 1e-12


class NumericalError(RuntimeError):
    """The simulation left the range where double precision is meaningful."""


class NormUnderflowError(NumericalError):
    pass


class MaxStepsError(NumericalError):
    pass


class ScheduleError(ValueError):
    """Invalid measurement schedule. ``index`` is the offending segment."""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"segment {index}: {message}"
        super().__init__(message)


class _Unmeasured:
    """Sentinel for an infinite measurement error (meter switched off)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNMEASURED"

    def __reduce__(self):
        return (_Unmeasured, ())


UNMEASURED = _Unmeasured()

ErrorValue = Union[float, _Unmeasured]


def is_unmeasured(delta_E) -> bool:
    return delta_E is UNMEASURED


def damping_rate(level_energy: float, E: float, delta_E: ErrorValue, tau: float) -> float:
    """Real decay rate ``(E_n - E)^2 / (tau * delta_E^2)`` of one amplitude.

    Returns exactly 0.0 when the meter is off.
    """
    if is_unmeasured(delta_E):
        return 0.0
    return (level_energy - E) ** 2 / (tau * delta_E**2)


@dataclass(frozen=True)
class SystemSpec:
    """Eigenenergies of the unmeasured, unperturbed Hamiltonian.

    Levels are identified by position; degenerate energies are allowed.
    """

    energies: tuple
    hbar: float = 1.0

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        if len(energies) < 2:
            raise ValueError("a system needs at least 2 levels")
        if not all(math.isfinite(e) for e in energies):
            raise ValueError("energies must be finite")
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError("hbar must be positive and finite")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "hbar", float(self.hbar))

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def gap(self) -> float:
        """E_2 - E_1 for the first two levels."""
        return self.energies[1] - self.energies[0]


class DriveKind(str, Enum):
    NONE = "none"
    RESONANT_TWO_LEVEL = "resonant_two_level"
    GENERAL_MATRIX = "general_matrix"


def _check_hermitian(matrix: np.ndarray, where: str = "") -> None:
    scale = max(np.abs(matrix).max(), np.finfo(float).tiny)
    if np.abs(matrix - matrix.conj().T).max() > HERMITIAN_RTOL * scale:
        raise ValueError(f"drive matrix is not Hermitian{where}")


@dataclass(frozen=True)
class DriveSpec:
    """External perturbation V(t) in the H0 eigenbasis.

    ``resonant_two_level`` is the off-diagonal drive
    ``V12 = v0 * exp(i omega (t - t0))``, ``V21 = conj(V12)``. The name is
    historical: ``omega`` may be detuned from the level spacing.

    ``general_matrix`` takes ``matrix_elements`` as either a constant Hermitian
    array or a callable ``t -> array``. Callables are checked for
    hermiticity every time they are sampled.
    """

    kind: DriveKind = DriveKind.NONE
    v0: float = 0.0
    omega: float = 0.0
    t0: float = 0.0
    matrix_elements: Union[None, np.ndarray, Callable[[float], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        kind = DriveKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not (math.isfinite(self.v0) and self.v0 >= 0):
            raise ValueError("v0 must be non-negative")
        if kind is DriveKind.GENERAL_MATRIX:
            m = self.matrix_elements
            if m is None:
                raise ValueError("general_matrix drive needs matrix_elements")
            if not callable(m):
                m = np.array(m, dtype=complex)
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    raise ValueError("drive matrix must be square")
                _check_hermitian(m)
                m.setflags(write=False)
                object.__setattr__(self, "matrix_elements", m)

    @classmethod
    def resonant(cls, system: SystemSpec, v0: float, t0: float = 0.0) -> "DriveSpec":
        """Resonant drive, ``hbar * omega = E_2 - E_1``."""
        return cls(DriveKind.RESONANT_TWO_LEVEL, v0=v0, omega=system.gap / system.hbar, t0=t0)

    @property
    def is_static_matrix(self) -> bool:
        return self.kind is DriveKind.GENERAL_MATRIX and not callable(self.matrix_elements)

    def check_system(self, system: SystemSpec) -> None:
        if self.kind is DriveKind.RESONANT_TWO_LEVEL and system.n_levels != 2:
            raise ValueError("resonant_two_level drive requires exactly 2 levels")
        if self.is_static_matrix and self.matrix_elements.shape[0] != system.n_levels:
            raise ValueError("drive matrix size does not match the number of levels")

    def matrix(self, t: float, n_levels: int) -> np.ndarray:
        """V(t) as an ``n_levels x n_levels`` complex array."""
        if self.kind is DriveKind.NONE:
            return np.zeros((n_levels, n_levels), dtype=complex)
        if self.kind is DriveKind.RESONANT_TWO_LEVEL:
            v12 = self.v0 * cmath.exp(1j * self.omega * (t - self.t0))
            return np.array([[0.0, v12], [v12.conjugate(), 0.0]], dtype=complex)
        m = self.matrix_elements
        if callable(m):
            m = np.asarray(m(t), dtype=complex)
            if m.shape != (n_levels, n_levels):
                raise ValueError(f"drive matrix at t={t} has shape {m.shape}")
            _check_hermitian(m, f" at t={t}")
        return m


@dataclass(frozen=True)
class MeterSegment:
    """One piece of a piecewise-constant measurement record."""

    t_start: float
    t_end: float
    result_E: float = 0.0
    delta_E: ErrorValue = UNMEASURED

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ScheduleError(f"non-positive duration [{self.t_start}, {self.t_end}]")
        if not is_unmeasured(self.delta_E):
            if not (self.delta_E > 0 and math.isfinite(self.delta_E)):
                raise ScheduleError(f"delta_E must be positive, got {self.delta_E}")
            object.__setattr__(self, "delta_E", float(self.delta_E))

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def measured(self) -> bool:
        return not is_unmeasured(self.delta_E)


def _measured_time(segments: Sequence[MeterSegment]) -> float:
    return math.fsum(s.duration for s in segments if s.measured)


@dataclass(frozen=True)
class MeasurementSchedule:
    """Time-ordered segments tiling ``[0, t_total]``.

    ``tau_total_measurement`` is the tau in every damping denominator. When not
    given it is the summed duration of measured segments (or the whole span if
    nothing is measured, where its value never enters).
    """

    segments: tuple
    tau_total_measurement: Optional[float] = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if self.tau_total_measurement is None and segs:
            tau = _measured_time(segs) or (segs[-1].t_end - segs[0].t_start)
            object.__setattr__(self, "tau_total_measurement", tau)

    @property
    def tau(self) -> float:
        return self.tau_total_measurement

    @property
    def t_total(self) -> float:
        return self.segments[-1].t_end

    @property
    def boundaries(self) -> list:
        return [self.segments[0].t_start] + [s.t_end for s in self.segments]


def validate_schedule(schedule: MeasurementSchedule) -> MeasurementSchedule:
    """Return ``schedule`` unchanged if it is a valid tiling of ``[0, t_total]``."""
    segs = schedule.segments
    if not segs:
        raise ScheduleError("schedule has no segments")
    for i, seg in enumerate(segs):
        if not seg.t_end > seg.t_start:
            raise ScheduleError("non-positive duration", i)
        if seg.measured and not seg.delta_E > 0:
            raise ScheduleError("non-positive delta_E", i)
        if i == 0:
            if abs(seg.t_start) > TILING_ATOL:
                raise ScheduleError(f"schedule must start at 0, starts at {seg.t_start}", 0)
            continue
        prev_end = segs[i - 1].t_end
        if seg.t_start < prev_end - TILING_ATOL:
            raise ScheduleError(f"overlaps previous segment ({seg.t_start} < {prev_end})", i)
        if seg.t_start > prev_end + TILING_ATOL:
            raise ScheduleError(f"gap after previous segment ({prev_end} .. {seg.t_start})", i)
    tau = schedule.tau_total_measurement
    if tau is None or not (tau > 0 and math.isfinite(tau)):
        raise ScheduleError(f"tau_total_measurement must be positive, got {tau}")
    return schedule


@dataclass(frozen=True)
class StateVector:
    """Unnormalized amplitudes c_n in the H0 eigenbasis at ``time``."""

    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        c = np.array(self.amplitudes, dtype=complex).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def basis(cls, level: int, n_levels: int, time: float = 0.0) -> "StateVector":
        c = np.zeros(n_levels, dtype=complex)
        c[level] = 1.0
        return cls(c, time)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def check_norm(self) -> "StateVector":
        n = self.norm_sq
        if not math.isfinite(n):
            raise NumericalError(f"non-finite amplitudes at t={self.time}")
        if n < NORM_FLOOR:
            raise NormUnderflowError(
                f"squared norm {n:.3g} below {NORM_FLOOR:g} at t={self.time}"
            )
        return self


class Regime(str, Enum):
    UNDERDAMPED = "underdamped"
    CRITICAL = "critical"
    OVERDAMPED = "overdamped"


@dataclass(frozen=True)
class RegimeParams:
    """Two-level frequencies for one segment.

    ``rates`` holds the individual damping rates ``(a_1, a_2)`` so that
    ``Omega == (a_2 - a_1) / 2``; the closed-form evolution needs both.
    """

    p: float
    q: complex
    Omega: float
    w: complex
    regime: Regime
    rates: tuple = (0.0, 0.0)

    @property
    def w_sq(self) -> complex:
        return self.q * self.q + self.p * self.p


def classify(w_sq: complex, p: float) -> Regime:
    tol = 1e-12 * p * p
    if w_sq.real > tol:
        return Regime.UNDERDAMPED
    if w_sq.real < -tol:
        return Regime.OVERDAMPED
    return Regime.CRITICAL


def regime_params(
    system: SystemSpec, drive: DriveSpec, segment: MeterSegment, tau: float
) -> RegimeParams:
    """Frequencies p, q, Omega, w of a two-level system on one segment."""
    if system.n_levels != 2:
        raise ValueError(f"regime_params needs exactly 2 levels, got {system.n_levels}")
    if drive.kind is DriveKind.GENERAL_MATRIX:
        raise ValueError("regime_params needs a resonant_two_level (or absent) drive")
    if segment.measured and not tau > 0:
        raise ValueError("tau must be positive")
    hbar = system.hbar
    E1, E2 = system.energies
    a1 = damping_rate(E1, segment.result_E, segment.delta_E, tau)
    a2 = damping_rate(E2, segment.result_E, segment.delta_E, tau)
    if drive.kind is DriveKind.NONE:
        p, omega = 0.0, 0.0
    else:
        p, omega = drive.v0 / hbar, drive.omega
    Omega = 0.0 if not segment.measured else ((E2 - segment.result_E) ** 2 - (E1 - segment.result_E) ** 2) / (
        2 * tau * segment.delta_E**2
    )
    q = complex((omega - (E2 - E1) / hbar) / 2, Omega)
    w_sq = q * q + p * p
    return RegimeParams(p, q, Omega, cmath.sqrt(w_sq), classify(w_sq, p), (a1, a2))
