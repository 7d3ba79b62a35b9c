import math

import pytest

from mensky_zeno.core import DriveSpec, SystemSpec


@pytest.fixture
def tls():
    """Natural-unit two-level system: E2 - E1 = V0 = hbar = 1, resonant drive."""
    system = SystemSpec((0.0, 1.0))
    return system, DriveSpec.resonant(system, 1.0)


def delta_e_for_omega(Omega, tau, gap=1.0):
    """Measurement error giving Omega = gap^2 / (2 tau dE^2) for a record at E1."""
    return math.sqrt(gap**2 / (2 * tau * Omega))
