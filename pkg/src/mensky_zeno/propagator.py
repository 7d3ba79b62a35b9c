"""Fixed-step RK4 integration of the measured, driven amplitude equations.

    dc_n/dt = [-i E_n/hbar - (E_n - E)^2 / (tau dE^2)] c_n - (i/hbar) sum_k V_nk(t) c_k

Works for any number of levels and any drive. Constant-matrix and resonant
drives go through a compiled kernel; callable drives use a plain numpy loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from .core import (
    NORM_FLOOR,
    DriveKind,
    DriveSpec,
    MaxStepsError,
    MeterSegment,
    NormUnderflowError,
    NumericalError,
    StateVector,
    SystemSpec,
    damping_rate,
)

# RK4 is stable up to |h lambda| ~ 2.8 on the negative real axis
_STIFFNESS_CAP = 0.1


@dataclass(frozen=True)
class IntegratorConfig:
    """``step=None`` picks :func:`default_step` per segment."""

    step: Optional[float] = None
    max_steps: int = 10**8

    def __post_init__(self):
        if self.step is not None and not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError("step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


def _diagonal(system: SystemSpec, segment: MeterSegment, tau: float) -> np.ndarray:
    energies = np.asarray(system.energies)
    rates = np.array([damping_rate(e, segment.result_E, segment.delta_E, tau) for e in energies])
    return -1j * energies / system.hbar - rates


def default_step(system: SystemSpec, drive: DriveSpec, segment: MeterSegment, tau: float) -> float:
    """Segment duration / 1000, at most 1e-3 over the fastest oscillation.

    The fastest oscillation is the larger of ``max |E_n| / hbar`` and the
    drive frequency scale; in natural units this is the ``1e-3 hbar / v0`` cap. Damping only needs stability, so
    strongly damped (deep Zeno) segments are capped at ``0.1 / max rate``.
    """
    energies = np.asarray(system.energies)
    rates = np.array([damping_rate(e, segment.result_E, segment.delta_E, tau) for e in energies])
    freq = np.abs(energies).max() / system.hbar
    if drive.kind is DriveKind.RESONANT_TWO_LEVEL:
        freq = max(freq, drive.v0 / system.hbar)
    elif drive.is_static_matrix:
        freq = max(freq, np.linalg.norm(drive.matrix_elements, 2) / system.hbar)
    step = segment.duration / 1000
    if freq > 0:
        step = min(step, 1e-3 / freq)
    if rates.max() > 0:
        step = min(step, _STIFFNESS_CAP / rates.max())
    return step


def rhs(
    state: StateVector,
    system: SystemSpec,
    drive: DriveSpec,
    segment: MeterSegment,
    tau: float,
    t: float,
) -> np.ndarray:
    """Time derivative of the amplitudes at time ``t``."""
    c = state.amplitudes
    V = drive.matrix(t, system.n_levels)
    return _diagonal(system, segment, tau) * c - 1j * (V @ c) / system.hbar


@nb.njit(cache=True)
def _deriv(out, c, t, diag, v_over_hbar, p, omega, t0):
    n = c.shape[0]
    for i in range(n):
        acc = 0j
        for k in range(n):
            acc += v_over_hbar[i, k] * c[k]
        out[i] = diag[i] * c[i] - 1j * acc
    if p != 0.0:
        ph = np.exp(1j * omega * (t - t0))
        out[0] += -1j * p * ph * c[1]
        out[1] += -1j * p * np.conj(ph) * c[0]


@nb.njit(cache=True)
def _rk4_kernel(c0, t_start, t_end, step, n_steps, diag, v_over_hbar, p, omega, t0, floor):
    """Return final amplitudes and the largest single-step rise of |c|^2.

    Stops early once |c|^2 drops below ``floor``.
    """
    n = c0.shape[0]
    c = c0.copy()
    tmp = np.empty(n, dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    h = step if t_end >= t_start else -step
    t = t_start
    norm = 0.0
    for i in range(n):
        norm += c[i].real ** 2 + c[i].imag ** 2
    max_rise = -np.inf
    for k in range(n_steps):
        if k == n_steps - 1:
            h = t_end - t
        _deriv(k1, c, t, diag, v_over_hbar, p, omega, t0)
        for i in range(n):
            tmp[i] = c[i] + 0.5 * h * k1[i]
        _deriv(k2, tmp, t + 0.5 * h, diag, v_over_hbar, p, omega, t0)
        for i in range(n):
            tmp[i] = c[i] + 0.5 * h * k2[i]
        _deriv(k3, tmp, t + 0.5 * h, diag, v_over_hbar, p, omega, t0)
        for i in range(n):
            tmp[i] = c[i] + h * k3[i]
        _deriv(k4, tmp, t + h, diag, v_over_hbar, p, omega, t0)
        new_norm = 0.0
        for i in range(n):
            c[i] = c[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            new_norm += c[i].real ** 2 + c[i].imag ** 2
        t = t_start + (k + 1) * h if k < n_steps - 1 else t_end
        if new_norm - norm > max_rise:
            max_rise = new_norm - norm
        norm = new_norm
        if norm < floor:
            break
    return c, max_rise


def _rk4_python(c0, t_start, t_end, step, n_steps, f):
    c = c0.copy()
    h = step if t_end >= t_start else -step
    t = t_start
    norm = float(np.vdot(c, c).real)
    max_rise = -np.inf
    for k in range(n_steps):
        if k == n_steps - 1:
            h = t_end - t
        k1 = f(t, c)
        k2 = f(t + 0.5 * h, c + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, c + 0.5 * h * k2)
        k4 = f(t + h, c + h * k3)
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t_start + (k + 1) * h if k < n_steps - 1 else t_end
        new_norm = float(np.vdot(c, c).real)
        max_rise = max(max_rise, new_norm - norm)
        norm = new_norm
        if norm < NORM_FLOOR:
            break
    return c, max_rise


@dataclass(frozen=True)
class IntegrationResult:
    state: StateVector
    n_steps: int
    max_norm_rise: float


def integrate(
    state0: StateVector,
    system: SystemSpec,
    drive: DriveSpec,
    segment: MeterSegment,
    tau: float,
    t_end: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> IntegrationResult:
    """Integrate from ``state0.time`` to ``t_end`` with the parameters of ``segment``.

    ``t_end`` may lie before ``state0.time`` (backward integration). Steps are
    uniform; the last one is shortened to land exactly on ``t_end``.
    """
    drive.check_system(system)
    if state0.amplitudes.shape != (system.n_levels,):
        raise ValueError("state size does not match the number of levels")
    step = config.step if config.step is not None else default_step(system, drive, segment, tau)
    span = abs(t_end - state0.time)
    if span == 0:
        return IntegrationResult(state0, 0, 0.0)
    n_steps = max(1, math.ceil(span / step * (1 - 1e-12)))
    if n_steps > config.max_steps:
        raise MaxStepsError(f"{n_steps} steps needed, max_steps is {config.max_steps}")

    diag = _diagonal(system, segment, tau)
    c0 = np.array(state0.amplitudes, dtype=np.complex128)
    if drive.kind is DriveKind.GENERAL_MATRIX and callable(drive.matrix_elements):
        hbar, n = system.hbar, system.n_levels

        def f(t, c):
            return diag * c - 1j * (drive.matrix(t, n) @ c) / hbar

        c, rise = _rk4_python(c0, state0.time, t_end, step, n_steps, f)
    else:
        if drive.is_static_matrix:
            v = np.ascontiguousarray(drive.matrix_elements, dtype=np.complex128) / system.hbar
        else:
            v = np.zeros((system.n_levels, system.n_levels), dtype=np.complex128)
        p = drive.v0 / system.hbar if drive.kind is DriveKind.RESONANT_TWO_LEVEL else 0.0
        c, rise = _rk4_kernel(
            c0, state0.time, float(t_end), step, n_steps, diag, v, p, drive.omega, drive.t0, NORM_FLOOR
        )
    norm = float(np.vdot(c, c).real)
    if not math.isfinite(norm):
        raise NumericalError(f"RK4 diverged before t={t_end}; reduce the step")
    if norm < NORM_FLOOR:
        raise NormUnderflowError(f"squared norm fell below {NORM_FLOOR:g} before t={t_end}")
    return IntegrationResult(StateVector(c, t_end), n_steps, float(rise))


def propagate_segment(
    state0: StateVector,
    system: SystemSpec,
    drive: DriveSpec,
    segment: MeterSegment,
    tau: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> StateVector:
    """Advance ``state0`` (at ``segment.t_start``) to ``segment.t_end``."""
    if not math.isclose(state0.time, segment.t_start, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"state at t={state0.time} but segment starts at {segment.t_start}")
    start = StateVector(state0.amplitudes, segment.t_start)
    return integrate(start, system, drive, segment, tau, segment.t_end, config).state


def probabilities(state: StateVector) -> np.ndarray:
    """Level populations ``|c_n|^2 / sum_k |c_k|^2``."""
    state.check_norm()
    weights = np.abs(state.amplitudes) ** 2
    return weights / weights.sum()
