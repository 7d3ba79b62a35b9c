import math

import numpy as np
import pytest

from mensky_zeno.closed_form import critical_error
from mensky_zeno.core import (
    UNMEASURED,
    DriveKind,
    DriveSpec,
    MeasurementSchedule,
    MeterSegment,
    ScheduleError,
    StateVector,
    SystemSpec,
)
from mensky_zeno.propagator import IntegratorConfig, probabilities
from mensky_zeno.schedules import (
    continuous,
    final_state,
    pi_pulse_duration,
    pulsed,
    run_schedule,
    stroboscopic_qnd,
    unmeasured,
)

T_PI = math.pi / 2


def p12(traj):
    return 1.0 - probabilities(final_state(traj))[0]


def fig2_schedule(n, x, system, drive):
    dE = x * critical_error(system, drive, T_PI)
    return continuous(T_PI, 0.0, dE) if n == "continuous" else pulsed(n, T_PI, 0.0, dE)


class TestContinuous:
    def test_single_segment(self):
        s = continuous(2 * math.pi, 0.0, 0.1)
        assert len(s.segments) == 1
        assert s.tau == 2 * math.pi

    def test_unmeasured_allowed(self):
        assert continuous(1.0, 0.0, UNMEASURED).tau == 1.0

    def test_zero_tau(self):
        with pytest.raises(ScheduleError):
            continuous(0.0, 0.0, 0.1)


class TestPulsed:
    def test_pulse_windows(self):
        s = pulsed(4, 1.0, 0.0, 0.2, duty=0.01)
        measured = [(seg.t_start, seg.t_end) for seg in s.segments if seg.measured]
        np.testing.assert_allclose(measured, [(0, 0.01), (0.25, 0.26), (0.5, 0.51), (0.75, 0.76)], atol=1e-15)
        assert len(s.segments) == 8
        assert s.tau == pytest.approx(0.04, abs=1e-16)
        assert s.t_total == 1.0

    def test_single_pulse(self):
        s = pulsed(1, 2.0, 0.0, 0.2)
        assert [seg.measured for seg in s.segments] == [True, False]
        assert s.segments[0].t_end == pytest.approx(0.02)

    def test_contiguous_gaps_elided(self):
        s = pulsed(100, 1.0, 0.0, 0.2, duty=0.01)
        assert len(s.segments) == 100
        assert all(seg.measured for seg in s.segments)
        assert s.t_total == 1.0

    def test_too_many_pulses(self):
        with pytest.raises(ScheduleError):
            pulsed(4, 1.0, 0.0, 0.2, duty=0.5)

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_bad_count(self, n):
        with pytest.raises(ScheduleError):
            pulsed(n, 1.0, 0.0, 0.2)


class TestStroboscopic:
    def test_pulse_centres(self, tls):
        s = stroboscopic_qnd(3, 1e-3 * math.pi, 0.0, 0.1, *tls)
        centres = [(seg.t_start + seg.t_end) / 2 for seg in s.segments if seg.measured]
        np.testing.assert_allclose(centres, [math.pi, 2 * math.pi, 3 * math.pi], rtol=1e-14)
        assert s.t_total == pytest.approx(3 * math.pi + math.pi / 2)
        assert s.tau == pytest.approx(3e-3 * math.pi)

    def test_zero_periods(self, tls):
        with pytest.raises(ScheduleError):
            stroboscopic_qnd(0, 1e-3, 0.0, 0.1, *tls)

    def test_wide_pulse(self, tls):
        with pytest.raises(ScheduleError):
            stroboscopic_qnd(2, math.pi / 2, 0.0, 0.1, *tls)

    def test_meter_does_not_disturb(self, tls):
        system, drive = tls
        width = 1e-3 * math.pi
        base = stroboscopic_qnd(3, width, 0.0, UNMEASURED, system, drive)
        dE = 0.1 * critical_error(system, drive, base.tau)
        sched = stroboscopic_qnd(3, width, 0.0, dE, system, drive)
        ref = p12(run_schedule(StateVector([1, 0]), system, drive, unmeasured(sched.t_total)))
        for method in ("closed_form", "rk4"):
            got = p12(run_schedule(StateVector([1, 0]), system, drive, sched, method))
            assert abs(got - ref) <= 0.02


class TestRunSchedule:
    def test_methods_agree_continuous(self, tls):
        system, drive = tls
        s = continuous(2 * math.pi, 0.0, 0.2)
        a = run_schedule(StateVector([1, 0]), system, drive, s, "closed_form")
        b = run_schedule(StateVector([1, 0]), system, drive, s, "rk4", IntegratorConfig(1e-4))
        assert probabilities(final_state(a))[0] == pytest.approx(probabilities(final_state(b))[0], abs=1e-8)

    def test_single_pulse_then_free_pi(self, tls):
        system, drive = tls
        assert p12(run_schedule(StateVector([1, 0]), system, drive, fig2_schedule(1, 0.05, system, drive))) > 0.99

    def test_unmeasured_pi_pulse(self, tls):
        system, drive = tls
        T = pi_pulse_duration(system, drive)
        assert T == T_PI
        for method in ("closed_form", "rk4"):
            traj = run_schedule(StateVector([1, 0]), system, drive, continuous(T, 0.0, UNMEASURED), method)
            assert p12(traj) == pytest.approx(1.0, abs=1e-12)

    def test_continuity_at_boundaries(self, tls):
        system, drive = tls
        sched = pulsed(4, T_PI, 0.0, 0.3)
        traj = run_schedule(StateVector([1, 0]), system, drive, sched)
        times = [t for t, _ in traj]
        assert times == sched.boundaries
        for t, s in traj:
            assert s.time == t

    def test_state_is_carried(self, tls):
        # splitting a segment in two must reproduce the single-segment result
        system, drive = tls
        one = MeasurementSchedule((MeterSegment(0, 2.0, 0.0, 0.4),), 2.0)
        two = MeasurementSchedule((MeterSegment(0, 0.7, 0.0, 0.4), MeterSegment(0.7, 2.0, 0.0, 0.4)), 2.0)
        a = final_state(run_schedule(StateVector([1, 0]), system, drive, one)).amplitudes
        b = final_state(run_schedule(StateVector([1, 0]), system, drive, two)).amplitudes
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_drive_phase_is_global(self):
        # detuned drive with t0 != 0 across an unmeasured/measured split
        system = SystemSpec((0.0, 1.0))
        drive = DriveSpec(DriveKind.RESONANT_TWO_LEVEL, 0.8, 1.3, 0.45)
        sched = MeasurementSchedule(
            (MeterSegment(0, 0.9, 0.2, UNMEASURED), MeterSegment(0.9, 2.1, 0.2, 0.5), MeterSegment(2.1, 3.0, 0.2, UNMEASURED)),
            1.2,
        )
        a = run_schedule(StateVector([0.6, 0.8]), system, drive, sched, "closed_form")
        b = run_schedule(StateVector([0.6, 0.8]), system, drive, sched, "rk4", IntegratorConfig(1e-4))
        for (ta, sa), (tb, sb) in zip(a, b):
            assert ta == tb
            np.testing.assert_allclose(np.abs(sa.amplitudes) ** 2, np.abs(sb.amplitudes) ** 2, atol=1e-8)

    def test_method_equivalence_all_boundaries(self, tls):
        system, drive = tls
        for n in (1, 4, 16):
            sched = fig2_schedule(n, 0.5, system, drive)
            a = run_schedule(StateVector([1, 0]), system, drive, sched, "closed_form")
            b = run_schedule(StateVector([1, 0]), system, drive, sched, "rk4", IntegratorConfig(1e-4))
            for (_, sa), (_, sb) in zip(a, b):
                np.testing.assert_allclose(np.abs(sa.amplitudes) ** 2, np.abs(sb.amplitudes) ** 2, atol=1e-8)

    @pytest.mark.parametrize("method", ["closed_form", "rk4"])
    def test_continuous_limit(self, tls, method):
        system, drive = tls
        cfg = IntegratorConfig(1e-4)
        for x in (0.1, 1.0, 3.0):
            a = p12(run_schedule(StateVector([1, 0]), system, drive, fig2_schedule(100, x, system, drive), method, cfg))
            b = p12(run_schedule(StateVector([1, 0]), system, drive, fig2_schedule("continuous", x, system, drive), method, cfg))
            assert a == pytest.approx(b, abs=1e-12)

    def test_pulsed_zeno_monotone(self, tls):
        system, drive = tls
        values = [
            p12(run_schedule(StateVector([1, 0]), system, drive, fig2_schedule(n, 0.1, system, drive)))
            for n in (1, 4, 16, 64, 100)
        ]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_sample_times(self, tls):
        system, drive = tls
        sched = continuous(2.0, 0.0, 0.5)
        traj = run_schedule(StateVector([1, 0]), system, drive, sched, sample_times=[0.5, 1.0, 1.5])
        assert [t for t, _ in traj] == [0.0, 0.5, 1.0, 1.5, 2.0]
        assert probabilities(traj[2][1])[0] == pytest.approx(0.8, abs=1e-14)

    def test_sample_out_of_range(self, tls):
        with pytest.raises(ValueError):
            run_schedule(StateVector([1, 0]), *tls, continuous(1.0, 0.0, 0.5), sample_times=[2.0])

    def test_per_segment_tau(self, tls):
        system, drive = tls
        sched = pulsed(4, T_PI, 0.0, 0.3)
        total = run_schedule(StateVector([1, 0]), system, drive, sched)
        per = run_schedule(StateVector([1, 0]), system, drive, sched, tau_convention="per-segment")
        # a pulse of width tau/4 damps 4x faster per unit time under the per-segment reading
        assert p12(per) < p12(total)
        single = continuous(T_PI, 0.0, 0.3)
        a = run_schedule(StateVector([1, 0]), system, drive, single)
        b = run_schedule(StateVector([1, 0]), system, drive, single, tau_convention="per-segment")
        np.testing.assert_array_equal(final_state(a).amplitudes, final_state(b).amplitudes)

    def test_closed_form_needs_two_levels(self):
        system = SystemSpec((0.0, 1.0, 2.0))
        with pytest.raises(ValueError):
            run_schedule(StateVector([1, 0, 0]), system, DriveSpec(), continuous(1.0, 0.0, 0.5), "closed_form")

    def test_three_level_rk4(self):
        system = SystemSpec((0.0, 1.0, 3.0))
        traj = run_schedule(StateVector([1, 1, 1]), system, DriveSpec(), continuous(2.0, 1.0, 0.8), "rk4")
        p = probabilities(final_state(traj))
        assert p[1] > p[0] > p[2]

    def test_reproducible(self, tls):
        system, drive = tls
        sched = pulsed(16, T_PI, 0.0, 0.2)
        for method in ("closed_form", "rk4"):
            a = run_schedule(StateVector([1, 0]), system, drive, sched, method)
            b = run_schedule(StateVector([1, 0]), system, drive, sched, method)
            assert all(np.array_equal(sa.amplitudes, sb.amplitudes) for (_, sa), (_, sb) in zip(a, b))
