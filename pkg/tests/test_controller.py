import math

import numpy as np
import pytest

from uavtune.controller import (
    GAIN_BOUND, GAIN_NAMES, GAIN_UPPER, L_CMD, ControllerState, DeltaCommands, GainSet, Waypoint,
    clip_gains, compute_errors, mix, pid_step, rate_limit_setpoint,
)
from uavtune.dynamics import H, PE, PN, PSI, PWM_MAX, PWM_MIN

DT = 0.004


def gains_with(**named):
    g = np.zeros(18)
    for k, v in named.items():
        g[GAIN_NAMES.index(k)] = v
    return GainSet(g)


def est_at(n=0.0, e=0.0, h=0.0, yaw_deg=0.0):
    x = np.zeros(12)
    x[PN], x[PE], x[H], x[PSI] = n, e, h, math.radians(yaw_deg)
    return x


class TestGainSet:
    def test_layout(self):
        assert len(GAIN_NAMES) == 18
        assert GAIN_NAMES[:3] == ("phi_P", "phi_I", "phi_D")
        assert GAIN_NAMES[-1] == "p_e_D"

    def test_initialisation_envelope(self):
        assert np.allclose(GAIN_UPPER[:9], 20.0)
        assert np.allclose(GAIN_UPPER[9:12], 30.0)
        assert np.allclose(GAIN_UPPER[12:], 20 / 15)
        assert np.allclose(GAIN_BOUND, 4 * GAIN_UPPER)

    def test_list_round_trip(self):
        vals = list(np.arange(18) * 0.5)
        g = GainSet.from_list(vals)
        assert g.to_list() == vals
        assert g["theta_I"] == 2.0

    @pytest.mark.parametrize("vals", [np.zeros(17), np.full(18, np.nan)])
    def test_invalid(self, vals):
        with pytest.raises(ValueError):
            GainSet(vals)

    def test_bounds(self):
        assert GainSet(GAIN_UPPER).within_bounds()
        assert not GainSet(5 * GAIN_UPPER).within_bounds()
        assert np.allclose(clip_gains(-10 * GAIN_UPPER), -GAIN_BOUND)

    def test_printed_height_gains_are_negated(self):
        g = GainSet(np.ones(18)).with_printed_height_gains(p=-0.5, i=-0.3, d=-0.1)
        assert g.values[9] > 0 and g.values[10] > 0 and g.values[11] > 0
        assert g.printed_height_gains() == pytest.approx((-0.5, -0.3, -0.1))
        assert np.array_equal(g.values[:9], np.ones(9))


class TestErrors:
    def test_zero_at_setpoint(self):
        err = compute_errors(est_at(0.1, -0.1, 0.2, 30), Waypoint(0.1, -0.1, 0.2, 30))
        assert np.allclose(err, 0.0)

    def test_height_limited_to_ten_cm(self):
        err = compute_errors(est_at(h=0.0), Waypoint(h=0.25))
        assert err[3] == 10.0

    def test_position_limited_to_fifteen_cm(self):
        err = compute_errors(est_at(), Waypoint(n=1.0, e=-1.0))
        assert err[4] == 15.0 and err[5] == -15.0

    def test_yaw_wrapped_then_limited(self):
        # 170 - (-170) = 340, which wraps to -20 and limits to -15
        err = compute_errors(est_at(yaw_deg=-170), Waypoint(yaw=170))
        assert err[2] == pytest.approx(-15.0)
        err = compute_errors(est_at(yaw_deg=-170), Waypoint(yaw=178))
        assert err[2] == pytest.approx(-12.0)

    def test_attitude_error_against_held_setpoint(self):
        st = ControllerState()
        st.attitude_setpoint[:] = (5.0, -3.0)
        err = compute_errors(est_at(), Waypoint(), st)
        assert err[0] == 5.0 and err[1] == -3.0

    def test_non_finite_estimate(self):
        with pytest.raises(ValueError):
            compute_errors(np.full(12, np.nan), Waypoint())


class TestPid:
    def test_zero_in_zero_out(self):
        out = pid_step(np.zeros(6), GainSet(np.ones(18)), ControllerState(), DT)
        assert np.all(out.as_array() == 0.0)

    def test_integral_only_height(self):
        g = gains_with(h_I=2.0)
        st = ControllerState()
        e = np.array([0, 0, 0, 5.0, 0, 0])
        for k in range(1, 101):
            out = pid_step(e, g, st, DT)
            assert out.thrust == pytest.approx(2.0 * 5.0 * k * DT, rel=1e-12)

    def test_integral_saturates(self):
        g = gains_with(h_I=2.0)
        st = ControllerState()
        e = np.array([0, 0, 0, 10.0, 0, 0])
        for _ in range(5000):
            out = pid_step(e, g, st, DT)
        assert out.thrust == L_CMD and out.saturated[3]
        assert abs(st.integrators[3]) <= L_CMD / 2.0 + 1e-12

    def test_windup_released_within_one_tick(self):
        g = gains_with(h_P=5.0, h_I=2.0)
        st = ControllerState()
        for _ in range(5000):
            pid_step(np.array([0, 0, 0, 10.0, 0, 0]), g, st, DT)
        out = pid_step(np.array([0, 0, 0, -10.0, 0, 0]), g, st, DT)
        assert out.thrust < L_CMD

    def test_proportional_step(self):
        g = gains_with(phi_P=3.0, theta_P=4.0, psi_P=2.0, h_P=6.0)
        out = pid_step(np.array([1.5, -2.0, 4.0, 3.0, 0, 0]), g, ControllerState(), DT)
        assert out.as_array() == pytest.approx([4.5, -8.0, 8.0, 18.0])

    def test_derivative_is_backward_difference(self):
        g = gains_with(h_D=0.5)
        st = ControllerState()
        pid_step(np.array([0, 0, 0, 1.0, 0, 0]), g, st, DT)
        out = pid_step(np.array([0, 0, 0, 3.0, 0, 0]), g, st, DT)
        assert out.thrust == pytest.approx(0.5 * 2.0 / DT)

    def test_outputs_saturate(self):
        g = GainSet(np.full(18, 100.0))
        out = pid_step(np.array([15, -15, 15, 10, 15, 15.0]), g, ControllerState(), DT)
        assert np.all(np.abs(out.as_array()) == L_CMD)
        assert all(out.saturated)

    def test_outer_loop_holds_between_position_updates(self):
        g = gains_with(p_n_P=1.0, p_e_P=1.0)
        st = ControllerState()
        upd = np.array([True] * 6)
        pid_step(np.array([0, 0, 0, 0, 8.0, 0]), g, st, DT, upd)
        held = st.attitude_setpoint.copy()
        assert np.any(held != 0)
        upd[4:] = False
        pid_step(np.array([0, 0, 0, 0, -8.0, 4.0]), g, st, DT, upd)
        assert np.array_equal(st.attitude_setpoint, held)

    def test_position_command_maps_to_tilt(self):
        g = gains_with(p_n_P=1.0)
        st = ControllerState()
        pid_step(np.array([0, 0, 0, 0, 15.0, 0]), g, st, DT)
        # 15 cm north error at zero heading: pitch nose-down by 15 * 0.75 degrees
        assert st.attitude_setpoint == pytest.approx([0.0, -11.25])
        # facing east, the same north error becomes a roll to the left
        st = ControllerState()
        pid_step(np.array([0, 0, 0, 0, 15.0, 0]), g, st, DT, heading=math.pi / 2)
        assert st.attitude_setpoint == pytest.approx([-11.25, 0.0], abs=1e-12)

    def test_tilt_setpoint_limited(self):
        g = gains_with(p_n_P=50.0, p_e_P=50.0)
        st = ControllerState()
        pid_step(np.array([0, 0, 0, 0, 15.0, 15.0]), g, st, DT)
        assert np.all(np.abs(st.attitude_setpoint) <= 15.0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            pid_step(np.zeros(6), GainSet(np.ones(18)), ControllerState(), 0.0)

    def test_reset(self):
        st = ControllerState()
        pid_step(np.full(6, 3.0), GainSet(np.ones(18)), st, DT)
        st.reset()
        assert not st.buf.any() and not st.attitude_setpoint.any()


class TestMix:
    def test_neutral(self):
        pwm, flags = mix(DeltaCommands(0, 0, 0, 0), PWM_MIN)
        assert np.all(pwm == PWM_MIN) and not any(flags)

    def test_yaw_splits_spin_groups(self):
        pwm, _ = mix(DeltaCommands(0, 0, 40.0, 0), 1500.0)
        d = pwm - 1500.0
        assert np.allclose(d[::2], 40.0) and np.allclose(d[1::2], -40.0)

    def test_thrust_clamps(self):
        pwm, flags = mix(DeltaCommands(0, 0, 0, 1000.0), PWM_MIN)
        assert np.all(pwm == PWM_MAX) and flags[3]

    def test_roll_and_pitch_are_antisymmetric(self):
        pwm, _ = mix(DeltaCommands(50.0, 0, 0, 0), 1500.0)
        assert np.allclose(pwm[1:3] - 1500, -(pwm[4:6] - 1500))
        assert np.isclose(pwm.sum(), 9000.0)
        pwm, _ = mix(DeltaCommands(0, 50.0, 0, 0), 1500.0)
        assert pwm[0] > 1500 > pwm[3]


class TestRateLimit:
    def run(self, cur, tgt):
        t = 0
        while cur != tgt:
            cur = rate_limit_setpoint(cur, tgt, DT)
            t += 1
            assert t < 10000
        return t

    def test_unchanged_at_target(self):
        w = Waypoint(0.1, 0.2, 0.3, 40)
        assert rate_limit_setpoint(w, w, DT) == w

    def test_height_ramp_takes_one_second(self):
        assert self.run(Waypoint(h=0.2), Waypoint(h=0.4)) == 250

    def test_yaw_ramp_takes_one_and_a_half_seconds(self):
        assert self.run(Waypoint(yaw=40), Waypoint(yaw=85)) == 375

    def test_lands_exactly_on_target(self):
        cur = Waypoint(n=0.0)
        for _ in range(200):
            cur = rate_limit_setpoint(cur, Waypoint(n=0.06), DT)
        assert cur.n == 0.06

    def test_yaw_takes_short_way_round(self):
        nxt = rate_limit_setpoint(Waypoint(yaw=170), Waypoint(yaw=-170), DT)
        assert nxt.yaw == pytest.approx(170 + 30 * DT)
