"""Quantum Zeno effect from an effective non-Hermitian Hamiltonian.

A system measured in energy with result ``E`` and accuracy ``delta_E`` for a
total time ``tau`` evolves under

    H_eff = H0 - i hbar (H0 - E)^2 / (tau delta_E^2)

which damps every level in proportion to its distance from the record.
"""

from .closed_form import (
    critical_error,
    free_decay_coefficients,
    survival_probability,
    two_level_evolve,
)
from .core import (
    UNMEASURED,
    DriveKind,
    DriveSpec,
    MaxStepsError,
    MeasurementSchedule,
    MeterSegment,
    NormUnderflowError,
    NumericalError,
    Regime,
    RegimeParams,
    ScheduleError,
    StateVector,
    SystemSpec,
    regime_params,
    validate_schedule,
)
from .propagator import IntegratorConfig, integrate, probabilities, propagate_segment, rhs
from .schedules import continuous, pulsed, run_schedule, stroboscopic_qnd

__version__ = "0.1.0"
