"""Nested PID controller, hexacopter mixer and setpoint rate limiter.

Controller units: attitude and yaw errors in degrees, height and position
errors in centimetres, outputs in PWM microseconds. The position loop emits a
command in centimetres (limited to +/-20) that is mapped onto a +/-15 degree
tilt setpoint for the attitude loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import PHI, PSI, PWM_MAX, PWM_MIN, THETA, H, PN, PE

DOFS = ("phi", "theta", "psi", "h", "p_n", "p_e")
TERMS = ("P", "I", "D")
GAIN_NAMES = tuple(f"{dof}_{term}" for dof in DOFS for term in TERMS)
N_GAINS = 18

L_CMD = 300.0
POSITION_CMD = 20.0
ERROR_LIMITS = np.array([15.0, 15.0, 15.0, 10.0, 15.0, 15.0])
OUTPUT_LIMITS = np.array([L_CMD, L_CMD, L_CMD, L_CMD, POSITION_CMD, POSITION_CMD])
# degrees of tilt setpoint per centimetre of position command
TILT_PER_CMD = 15.0 / POSITION_CMD
TILT_SETPOINT_LIMIT = 15.0
# upper bound of each gain at initialisation: l_cmd / l_er per DoF
GAIN_UPPER = np.repeat(OUTPUT_LIMITS / ERROR_LIMITS, 3)
GAIN_SLACK = 4.0
GAIN_BOUND = GAIN_SLACK * GAIN_UPPER

# north/east m/s, height m/s, yaw deg/s
RATE_LIMITS = np.array([0.1, 0.1, 0.2, 30.0])

MIXER = np.column_stack([
    np.ones(6),
    -np.sin(np.deg2rad(np.arange(6) * 60.0)),
    np.cos(np.deg2rad(np.arange(6) * 60.0)),
    np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0]),
])

# Height gains in the sweep tables are printed negated and in PWM per mm.
HEIGHT_PRINTED_SCALE = 10.0
_HEIGHT = slice(9, 12)


@dataclass
class GainSet:
    """The 18-gain genome, ordered (phi P, I, D, theta P, ..., p_e D)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape != (N_GAINS,):
            raise ValueError(f"a gain set has {N_GAINS} values, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("gains must be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.values[GAIN_NAMES.index(name)])

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]

    @classmethod
    def from_list(cls, values) -> "GainSet":
        return cls(np.array(values, dtype=np.float64))

    def within_bounds(self) -> bool:
        return bool(np.all(np.abs(self.values) <= GAIN_BOUND))

    def printed_height_gains(self) -> tuple[float, float, float]:
        """Height P, I, D in the printed sweep convention (negated, PWM/mm)."""
        return tuple(float(-v / HEIGHT_PRINTED_SCALE) for v in self.values[_HEIGHT])

    def with_printed_height_gains(self, p=None, i=None, d=None) -> "GainSet":
        vals = self.values.copy()
        for k, v in enumerate((p, i, d)):
            if v is not None:
                vals[9 + k] = -v * HEIGHT_PRINTED_SCALE
        return GainSet(vals)


def clip_gains(values) -> np.ndarray:
    """Clamp to the sanity envelope (4x the initialisation bound)."""
    return np.clip(values, -GAIN_BOUND, GAIN_BOUND)


@dataclass
class Waypoint:
    n: float = 0.0
    e: float = 0.0
    h: float = 0.0
    yaw: float = 0.0  # degrees

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.e, self.h, self.yaw], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Waypoint":
        return cls(*map(float, a))


@dataclass
class ControllerState:
    """Integrators, derivative memory and held outer-loop attitude setpoints.

    ``buf`` rows: integrator, previous error, held derivative, time since the
    channel's last measurement update, previous-error-valid flag.
    """

    buf: np.ndarray = field(default_factory=lambda: np.zeros((5, 6)))
    attitude_setpoint: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def reset(self):
        self.buf[:] = 0.0
        self.attitude_setpoint[:] = 0.0

    @property
    def integrators(self) -> np.ndarray:
        return self.buf[0]


@dataclass
class DeltaCommands:
    roll: float
    pitch: float
    yaw: float
    thrust: float
    saturated: tuple[bool, bool, bool, bool] = (False, False, False, False)

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw, self.thrust])


@njit(cache=True)
def wrap_deg(angle):
    return math.degrees(math.atan2(math.sin(math.radians(angle)), math.cos(math.radians(angle))))


@njit(cache=True)
def _clip(v, lim):
    return min(max(v, -lim), lim)


@njit(cache=True)
def _compute_errors(est, sp, att_sp, out):
    out[0] = _clip(att_sp[0] - math.degrees(est[PHI]), 15.0)
    out[1] = _clip(att_sp[1] - math.degrees(est[THETA]), 15.0)
    out[2] = _clip(wrap_deg(sp[3] - math.degrees(est[PSI])), 15.0)
    out[3] = _clip((sp[2] - est[H]) * 100.0, 10.0)
    out[4] = _clip((sp[0] - est[PN]) * 100.0, 15.0)
    out[5] = _clip((sp[1] - est[PE]) * 100.0, 15.0)


@njit(cache=True)
def _pid_channel(j, e, kp, ki, kd, cs, dt, updated, limit):
    if updated:
        if cs[4, j] > 0.0:
            cs[2, j] = (e - cs[1, j]) / cs[3, j]
        else:
            cs[2, j] = 0.0
        cs[1, j] = e
        cs[4, j] = 1.0
    if ki != 0.0:
        bound = limit / abs(ki)
        cs[0, j] = _clip(cs[0, j] + e * dt, bound)
    else:
        cs[0, j] = 0.0
    return kp * e + ki * cs[0, j] + kd * cs[2, j]


@njit(cache=True)
def _pid_update(err, gains, cs, att_sp, dt, updated, heading, delta, sat):
    for j in range(6):
        cs[3, j] += dt
    # outer loop: runs only when a fresh position estimate arrived
    if updated[4] or updated[5]:
        outs = np.zeros(2)
        for k in range(2):
            j = 4 + k
            elapsed = cs[3, j]
            raw = _pid_channel(j, err[j], gains[3 * j], gains[3 * j + 1], gains[3 * j + 2],
                               cs, elapsed, True, 20.0)
            outs[k] = _clip(raw, 20.0)
            cs[3, j] = 0.0
        c = math.cos(heading)
        s = math.sin(heading)
        fwd = c * outs[0] + s * outs[1]
        right = -s * outs[0] + c * outs[1]
        att_sp[0] = _clip(right * 0.75, 15.0)
        att_sp[1] = _clip(-fwd * 0.75, 15.0)
    for j in range(4):
        raw = _pid_channel(j, err[j], gains[3 * j], gains[3 * j + 1], gains[3 * j + 2],
                           cs, dt, updated[j], 300.0)
        if updated[j]:
            cs[3, j] = 0.0
        sat[j] = abs(raw) >= 300.0
        delta[j] = _clip(raw, 300.0)


@njit(cache=True)
def _mix(delta, base, pwm):
    """delta = (roll, pitch, yaw, thrust). Writes clamped PWMs into ``pwm``."""
    for i in range(6):
        ang = i * (math.pi / 3.0)
        spin = 1.0 if i % 2 == 0 else -1.0
        u = base + delta[3] - math.sin(ang) * delta[0] + math.cos(ang) * delta[1] + spin * delta[2]
        pwm[i] = min(max(u, PWM_MIN), PWM_MAX)


@njit(cache=True)
def _rate_limit(sp, target, dt, rates):
    for k in range(4):
        if k == 3:
            diff = wrap_deg(target[3] - sp[3])
        else:
            diff = target[k] - sp[k]
        max_step = rates[k] * dt
        if abs(diff) <= max_step * (1.0 + 1e-9):
            sp[k] = target[k]
        else:
            sp[k] += max_step if diff > 0 else -max_step
            if k == 3:
                sp[3] = wrap_deg(sp[3])


def _estimate_array(estimate) -> np.ndarray:
    if hasattr(estimate, "to_array"):
        estimate = estimate.to_array()
    est = np.asarray(estimate, dtype=np.float64)
    if not np.all(np.isfinite(est[:12])):
        raise ValueError("estimate must be finite")
    return est


def compute_errors(estimate, setpoint: Waypoint, state: ControllerState | None = None) -> np.ndarray:
    """Limited per-DoF errors (phi, theta, psi in deg; h, p_n, p_e in cm).

    Roll and pitch errors are taken against the outer loop's held attitude
    setpoints in ``state``.
    """
    att = np.zeros(2) if state is None else state.attitude_setpoint
    out = np.zeros(6)
    _compute_errors(_estimate_array(estimate), setpoint.as_array(), att, out)
    return out


def pid_step(errors, gains, state: ControllerState, dt: float, updated=None,
             heading: float = 0.0) -> DeltaCommands:
    """Advance the nested PID one control tick.

    ``updated`` flags which channels received a fresh measurement this tick
    (default: all). The position loop only runs on ticks where its estimate
    updated; the held derivative of each channel refreshes on its updates.
    ``heading`` (rad) rotates the position command into the body frame.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = gains.values if isinstance(gains, GainSet) else np.asarray(gains, dtype=np.float64)
    upd = np.ones(6, dtype=np.bool_) if updated is None else np.asarray(updated, dtype=np.bool_)
    delta = np.zeros(4)
    sat = np.zeros(4, dtype=np.bool_)
    _pid_update(np.asarray(errors, dtype=np.float64), g, state.buf, state.attitude_setpoint,
                dt, upd, heading, delta, sat)
    return DeltaCommands(*map(float, delta), saturated=tuple(bool(s) for s in sat))


def mix(delta: DeltaCommands, base: float = PWM_MIN):
    """Six motor PWMs plus per-channel saturation flags (roll, pitch, yaw, thrust)."""
    d = delta.as_array()
    pwm = np.zeros(6)
    _mix(d, float(base), pwm)
    flags = tuple(bool(abs(v) >= L_CMD) for v in d)
    return pwm, flags


def rate_limit_setpoint(current: Waypoint, target: Waypoint, dt: float) -> Waypoint:
    if dt <= 0:
        raise ValueError("dt must be positive")
    sp = current.as_array()
    _rate_limit(sp, target.as_array(), dt, RATE_LIMITS)
    return Waypoint.from_array(sp)
