"""Exact two-level solutions under continuous energy measurement.

These are the fast path for two-level runs and the oracle the numeric
propagator is checked against.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .core import (
    DriveKind,
    DriveSpec,
    ErrorValue,
    RegimeParams,
    StateVector,
    SystemSpec,
    damping_rate,
)

SERIES_THRESHOLD = 1e-6
# beyond this |Im(w) t| the cosh/sinh growth is folded into the decay exponent
_EXP_SPLIT = 30.0


def free_decay_coefficients(
    state0: StateVector,
    system: SystemSpec,
    E: float,
    delta_E: ErrorValue,
    tau: float,
    t: float,
) -> StateVector:
    """Undriven amplitudes after time ``t``.

    Each level picks up its phase ``exp(-i E_n t / hbar)`` and decays at
    rate ``(E_n - E)^2 / (tau delta_E^2)``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    energies = np.asarray(system.energies)
    rates = np.array([damping_rate(e, E, delta_E, tau) for e in energies])
    c = state0.amplitudes * np.exp((-1j * energies / system.hbar - rates) * t)
    return StateVector(c, state0.time + t).check_norm()


def _damped_cos_sinc(w: complex, s: float, t: float):
    """Return ``exp(-s t) cos(w t)`` and ``exp(-s t) sin(w t) / w``.

    Stays finite when ``|Im w| t`` is large by combining the growing
    exponential with the decay first.
    """
    wt = w * t
    if abs(wt) < SERIES_THRESHOLD:
        e = math.exp(-s * t)
        wt2 = wt * wt
        return e * (1 - wt2 / 2), e * t * (1 - wt2 / 6)
    if w.imag < 0:
        w = -w
        wt = -wt
    if wt.imag < _EXP_SPLIT:
        e = math.exp(-s * t)
        return e * cmath.cos(wt), e * cmath.sin(wt) / w
    grow = cmath.exp(-s * t - 1j * wt)
    shrink = cmath.exp(-s * t + 1j * wt)
    return (grow + shrink) / 2, (shrink - grow) / (2j * w)


def two_level_evolve(
    state0: StateVector,
    params: RegimeParams,
    system: SystemSpec,
    drive: DriveSpec,
    t: float,
) -> StateVector:
    """Exact driven, measured two-level evolution over a segment-local time ``t``.

    The segment clock starts at ``state0.time``; the drive keeps its global
    phase origin ``drive.t0``, so chaining segments stays phase coherent.
    ``params`` must come from :func:`regime_params` for the same segment.

    With ``V12 = v0 exp(i omega (t - t0))`` the solution reads

        c1(t) = exp(-i E1 t/hbar - a1 t + i q t)
                [c1 cos(w t) + (q c1 + exp(-i omega t0') p c2) sin(w t) / (i w)]
        c2(t) = exp(-i E2 t/hbar - a2 t - i q t)
                [c2 cos(w t) - (q c2 - exp(+i omega t0') p c1) sin(w t) / (i w)]

    with ``t0' = t0 - state0.time`` the phase origin on the local clock.
    """
    if system.n_levels != 2:
        raise ValueError("two_level_evolve needs exactly 2 levels")
    if drive.kind is DriveKind.GENERAL_MATRIX:
        raise ValueError("closed form only covers the resonant_two_level drive")
    if t < 0:
        raise ValueError("t must be non-negative")
    c1, c2 = state0.amplitudes
    E1, E2 = system.energies
    hbar = system.hbar
    p, q, w = params.p, params.q, params.w
    a1, a2 = params.rates
    s = (a1 + a2) / 2
    C, S = _damped_cos_sinc(w, s, t)
    # drive phase on the local clock
    phase = cmath.exp(1j * drive.omega * (drive.t0 - state0.time)) if p else 1.0
    new1 = cmath.exp(-1j * (E1 / hbar - q.real) * t) * (
        c1 * C - 1j * (q * c1 + phase.conjugate() * p * c2) * S
    )
    new2 = cmath.exp(-1j * (E2 / hbar + q.real) * t) * (
        c2 * C + 1j * (q * c2 - phase * p * c1) * S
    )
    out = StateVector(np.array([new1, new2]), state0.time + t)
    if not (cmath.isfinite(new1) and cmath.isfinite(new2)):
        raise AssertionError(f"closed form produced non-finite amplitudes: {params}, t={t}")
    return out.check_norm()


def _w_cot(w_sq: float, t):
    """``w cot(w t)`` for real ``w_sq`` (negative means imaginary w)."""
    w = math.sqrt(abs(w_sq))
    wt = w * t
    series = 1 / t - w_sq * t / 3
    with np.errstate(divide="ignore", invalid="ignore"):
        if w_sq < 0:
            exact = w / np.tanh(wt)
        else:
            exact = w / np.tan(wt)
    return np.where(wt < SERIES_THRESHOLD, series, exact)


def survival_probability(params: RegimeParams, t):
    """Normalized probability of staying in level 1.

    Valid for a resonant drive, initial state ``|1>`` and record ``E = E_1``:

        P1(t) = 1 / (1 + |p / (Omega + w cot(w t))|^2)

    ``t`` may be an array. ``P1(0) = 1`` by continuity.
    """
    if abs(params.q.real) > 1e-12 * max(1.0, abs(params.p)) or params.rates[0] != 0.0:
        raise ValueError(
            "survival_probability needs resonance and E = E_1; "
            "use two_level_evolve amplitudes for general records"
        )
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    p, Omega = params.p, params.Omega
    w_sq = p * p - Omega * Omega
    safe_t = np.where(t_arr > 0, t_arr, 1.0)
    denom = Omega + _w_cot(w_sq, safe_t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom == 0, np.inf, p / denom)
        p1 = 1.0 / (1.0 + ratio * ratio)
    # w t at a multiple of pi makes cot infinite: the state is back in |1>
    p1 = np.where(np.isfinite(denom), p1, 1.0)
    p1 = np.where(t_arr > 0, p1, 1.0)
    return float(p1) if np.ndim(p1) == 0 else p1


def critical_error(system: SystemSpec, drive: DriveSpec, tau: float) -> float:
    """Measurement error at which the resonant two-level system is critically damped.

    ``delta_E_crit = (E_2 - E_1) sqrt(hbar / (2 v0 tau))``. Above it the
    populations keep Rabi-oscillating, below it transitions are frozen.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not drive.v0 > 0:
        raise ValueError("v0 must be positive")
    return abs(system.gap) * math.sqrt(system.hbar / (2 * drive.v0 * tau))
