"""Rigid-body hexacopter plant: motors, ground effect, fan wind and tether.

Physics runs in a north-east-down frame internally; the public state reports
height ``h`` positive up. Angles are radians, rates rad/s, PWM in microseconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from numba import njit

PWM_MIN = 1090.0
PWM_MAX = 1950.0
PHYSICS_DT = 0.001

# state vector layout
PN, PE, H, VN, VE, VH, PHI, THETA, PSI, P, Q, R = range(12)
MOTORS = slice(12, 18)
STATE_SIZE = 18

# VehicleParams.as_array() layout
(_MASS, _IXX, _IYY, _IZZ, _ARM, _ROTOR_R, _ROTOR_OFF, _K_THRUST, _TAU,
 _DRAG_N, _DRAG_E, _DRAG_H, _ROT_DRAG, _YAW_K, _G, _HOVER_CURRENT) = range(16)

# TetherConfig.as_array() layout
_T_RADIUS, _T_ANCHOR, _T_PULL, _T_TILT, _T_YAW = range(5)

MOTOR_ANGLES = np.deg2rad(np.arange(6) * 60.0)
MOTOR_SPIN = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])


class SimulationDiverged(RuntimeError):
    """Integration produced a non-finite state."""


@dataclass
class VehicleParams:
    mass: float = 1.5
    inertia: tuple[float, float, float] = (0.03, 0.03, 0.05)
    arm_length: float = 0.3
    rotor_radius: float = 0.12
    # rotor plane height above the landing gear, used as the ground-effect z offset
    rotor_offset: float = 0.10
    # PWM above PWM_MIN that holds hover out of ground effect
    hover_delta: float = 200.0
    motor_tau: float = 0.02
    drag: tuple[float, float, float] = (0.15, 0.15, 0.5)
    rotational_drag: float = 0.01
    yaw_torque_coeff: float = 0.016
    gravity: float = 9.81
    max_tilt_deg: float = 60.0
    hover_current: float = 12.0

    def __post_init__(self):
        self.inertia = tuple(float(v) for v in self.inertia)
        self.drag = tuple(float(v) for v in self.drag)
        scalars = [self.mass, self.arm_length, self.rotor_radius, self.hover_delta,
                   self.motor_tau, self.gravity, self.max_tilt_deg, self.hover_current]
        if min(scalars) <= 0 or min(self.inertia) <= 0 or min(self.drag) <= 0:
            raise ValueError("vehicle parameters must be strictly positive")
        if self.rotational_drag < 0 or self.yaw_torque_coeff <= 0 or self.rotor_offset < 0:
            raise ValueError("vehicle parameters must be positive")
        if self.rotor_radius >= 2 * self.arm_length:
            raise ValueError("rotor_radius must be smaller than twice the arm length")
        if self.hover_delta >= PWM_MAX - PWM_MIN:
            raise ValueError("hover_delta must leave headroom below PWM_MAX")

    @property
    def thrust_per_pwm(self) -> float:
        """Newtons per microsecond above PWM_MIN, for one motor."""
        return self.mass * self.gravity / (6.0 * self.hover_delta)

    @property
    def max_thrust(self) -> float:
        return 6.0 * self.thrust_per_pwm * (PWM_MAX - PWM_MIN)

    def as_array(self) -> np.ndarray:
        return np.array([
            self.mass, *self.inertia, self.arm_length, self.rotor_radius,
            self.rotor_offset, self.thrust_per_pwm, self.motor_tau, *self.drag,
            self.rotational_drag, self.yaw_torque_coeff, self.gravity, self.hover_current,
        ], dtype=np.float64)


@dataclass
class WindField:
    mean_speed: float = 5.0
    traversal_deg: float = 120.0
    period: float = 10.0
    phase: float = 0.0
    # direction the air moves toward at the sweep centre, degrees from north
    heading_deg: float = 0.0
    fan_distance: float = 1.35
    turbulence: float = 0.05

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("wind period must be positive")
        if not 0.0 <= self.traversal_deg <= 360.0:
            raise ValueError("traversal angle must lie in [0, 360]")
        if self.mean_speed < 0 or self.turbulence < 0:
            raise ValueError("wind speed and turbulence must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([
            self.mean_speed, math.radians(self.heading_deg),
            0.5 * math.radians(self.traversal_deg), self.period, self.phase,
            self.turbulence,
        ], dtype=np.float64)


@dataclass
class TetherConfig:
    radius: float = 0.22
    # height of the tether's fixing point above the floor
    anchor_height: float = 0.05
    # tether-frame height (h - anchor_height) that counts as pulling on the tether;
    # None disables the rule
    pull_height: float | None = 0.18
    tilt_limit_deg: float = 60.0
    yaw_limit_deg: float = 160.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("tether radius must be positive")
        if self.anchor_height < 0:
            raise ValueError("anchor_height must be non-negative")
        if self.pull_height is not None and self.pull_height <= 0:
            raise ValueError("pull_height must be positive or None")

    @classmethod
    def ose(cls) -> "TetherConfig":
        return cls()

    @classmethod
    def tse(cls) -> "TetherConfig":
        return cls(radius=0.62, anchor_height=0.0, pull_height=None)

    def as_array(self) -> np.ndarray:
        pull = np.inf if self.pull_height is None else self.pull_height
        return np.array([self.radius, self.anchor_height, pull,
                         self.tilt_limit_deg, self.yaw_limit_deg], dtype=np.float64)


@dataclass
class VehicleState:
    p_n: float = 0.0
    p_e: float = 0.0
    h: float = 0.0
    v_n: float = 0.0
    v_e: float = 0.0
    v_h: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    motor_pwm: np.ndarray = field(default_factory=lambda: np.full(6, PWM_MIN))

    def to_array(self) -> np.ndarray:
        scalars = [getattr(self, f.name) for f in fields(self)[:12]]
        return np.concatenate([np.asarray(scalars, dtype=np.float64),
                               np.asarray(self.motor_pwm, dtype=np.float64)])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=np.float64)
        return cls(*map(float, x[:12]), motor_pwm=x[MOTORS].copy())


@njit(cache=True)
def ground_effect_factor(z, rotor_radius):
    """Thrust multiplier in ground effect, ``1 / (1 - (R / 4z)^2)``.

    Heights below 0.3 R are clamped; the expression is singular at z = R/4.
    """
    z = max(z, 0.3 * rotor_radius)
    ratio = rotor_radius / (4.0 * z)
    return 1.0 / (1.0 - ratio * ratio)


@njit(cache=True)
def _wind_vector(t, wind, noise_value):
    direction = wind[1] + wind[2] * math.sin(2.0 * math.pi * t / wind[3] + wind[4])
    speed = wind[0] * (1.0 + wind[5] * noise_value)
    return speed * math.cos(direction), speed * math.sin(direction)


def wind_at(t: float, field: WindField, noise=None, rate: float = 250.0) -> np.ndarray:
    """Horizontal wind velocity (north, east) in m/s at time ``t``.

    ``noise`` is a pre-drawn standard-normal sequence sampled at ``rate`` Hz
    (see :func:`wind_noise`); ``None`` gives the turbulence-free field.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    value = 0.0
    if noise is not None and len(noise):
        value = float(noise[min(int(math.floor(t * rate + 1e-9)), len(noise) - 1)])
    return np.array(_wind_vector(t, field.as_array(), value))


def wind_noise(seed, n: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


@njit(cache=True)
def _tether_distance(x, tether):
    dz = x[H] - tether[_T_ANCHOR]
    return math.sqrt(x[PN] * x[PN] + x[PE] * x[PE] + dz * dz)


@njit(cache=True)
def _clamp_tether(x, tether):
    """Project onto the tether sphere and drop outward radial velocity."""
    dist = _tether_distance(x, tether)
    radius = tether[_T_RADIUS]
    if dist <= radius:
        return False
    un = x[PN] / dist
    ue = x[PE] / dist
    uh = (x[H] - tether[_T_ANCHOR]) / dist
    x[PN] = un * radius
    x[PE] = ue * radius
    x[H] = tether[_T_ANCHOR] + uh * radius
    radial = x[VN] * un + x[VE] * ue + x[VH] * uh
    if radial > 0.0:
        x[VN] -= radial * un
        x[VE] -= radial * ue
        x[VH] -= radial * uh
    return True


@njit(cache=True)
def _substep(x, pwm_cmd, wind_n, wind_e, params, tether, dt):
    """One semi-implicit Euler step in place. Returns True if the tether is taut."""
    lag = 1.0 - math.exp(-dt / params[_TAU])
    for i in range(6):
        x[12 + i] += (pwm_cmd[i] - x[12 + i]) * lag

    ge = ground_effect_factor(x[H] + params[_ROTOR_OFF], params[_ROTOR_R])
    arm = params[_ARM]
    thrust = 0.0
    roll_m = 0.0
    pitch_m = 0.0
    yaw_m = 0.0
    for i in range(6):
        ti = params[_K_THRUST] * (x[12 + i] - PWM_MIN) * ge
        ang = i * (math.pi / 3.0)
        thrust += ti
        roll_m -= arm * math.sin(ang) * ti
        pitch_m += arm * math.cos(ang) * ti
        yaw_m += params[_YAW_K] * (1.0 if i % 2 == 0 else -1.0) * ti

    m = params[_MASS]
    cphi = math.cos(x[PHI])
    sphi = math.sin(x[PHI])
    cth = math.cos(x[THETA])
    sth = math.sin(x[THETA])
    cpsi = math.cos(x[PSI])
    spsi = math.sin(x[PSI])
    a_n = -thrust / m * (cphi * sth * cpsi + sphi * spsi) + params[_DRAG_N] / m * (wind_n - x[VN])
    a_e = -thrust / m * (cphi * sth * spsi - sphi * cpsi) + params[_DRAG_E] / m * (wind_e - x[VE])
    a_h = thrust / m * cphi * cth - params[_G] - params[_DRAG_H] / m * x[VH]

    ixx = params[_IXX]
    iyy = params[_IYY]
    izz = params[_IZZ]
    p = x[P]
    q = x[Q]
    r = x[R]
    damp = params[_ROT_DRAG]
    pdot = (roll_m - damp * p - (izz - iyy) * q * r) / ixx
    qdot = (pitch_m - damp * q - (ixx - izz) * p * r) / iyy
    rdot = (yaw_m - damp * r - (iyy - ixx) * p * q) / izz

    resting = x[H] <= 0.0 and a_h <= 0.0
    if resting:
        # skids on the floor hold position and tilt; the airframe can still yaw
        for k in range(3, 11):
            if k != PSI:
                x[k] = 0.0
        x[H] = 0.0
        x[R] += rdot * dt
        x[PSI] += x[R] * dt
    else:
        x[VN] += a_n * dt
        x[VE] += a_e * dt
        x[VH] += a_h * dt
        x[PN] += x[VN] * dt
        x[PE] += x[VE] * dt
        x[H] += x[VH] * dt
        x[P] += pdot * dt
        x[Q] += qdot * dt
        x[R] += rdot * dt
        p = x[P]
        q = x[Q]
        r = x[R]
        tth = sth / cth
        x[PHI] += (p + (q * sphi + r * cphi) * tth) * dt
        x[THETA] += (q * cphi - r * sphi) * dt
        x[PSI] += (q * sphi + r * cphi) / cth * dt

    taut = _clamp_tether(x, tether)
    if x[H] < 0.0:
        x[H] = 0.0
        if x[VH] < 0.0:
            x[VH] = 0.0
    return taut


@njit(cache=True)
def _advance(x, pwm_cmd, wind_n, wind_e, params, tether, dt):
    """Advance ``dt`` seconds in 1 kHz substeps. Returns (taut, finite)."""
    n = max(1, int(round(dt / PHYSICS_DT)))
    h = dt / n
    taut = False
    for _ in range(n):
        if _substep(x, pwm_cmd, wind_n, wind_e, params, tether, h):
            taut = True
    for k in range(STATE_SIZE):
        if not math.isfinite(x[k]):
            return taut, False
    return taut, True


_NO_TETHER = np.array([np.inf, 0.0, np.inf, 180.0, 360.0])


def step(state: VehicleState, pwm, wind, params: VehicleParams, dt: float,
         tether: TetherConfig | None = None) -> VehicleState:
    """Integrate the plant for ``dt`` seconds under fixed motor commands.

    ``wind`` is the (north, east) air velocity in m/s. Raises
    :class:`SimulationDiverged` if the result is not finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pwm = np.asarray(pwm, dtype=np.float64)
    if pwm.shape != (6,) or np.any(pwm < PWM_MIN) or np.any(pwm > PWM_MAX):
        raise ValueError(f"pwm must be 6 values in [{PWM_MIN}, {PWM_MAX}]")
    x = state.to_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    t_arr = _NO_TETHER if tether is None else tether.as_array()
    _, ok = _advance(x, pwm, float(wind[0]), float(wind[1]), params.as_array(), t_arr, dt)
    if not ok:
        raise SimulationDiverged("non-finite vehicle state")
    return VehicleState.from_array(x)


def hover_pwm(params: VehicleParams, h: float) -> float:
    """Per-motor PWM that balances gravity at height ``h`` with a level airframe."""
    ge = ground_effect_factor(h + params.rotor_offset, params.rotor_radius)
    return PWM_MIN + params.hover_delta / ge


@dataclass
class TetherViolation:
    radius: bool = False
    tilt: bool = False
    yaw: bool = False
    distance: float = 0.0

    def __bool__(self):
        return self.radius or self.tilt or self.yaw


def check_tether(state: VehicleState, tether: TetherConfig, start_yaw: float = 0.0) -> TetherViolation:
    """Report tether-radius, tilt and yaw-excursion violations for ``state``."""
    x = state.to_array()
    dist = float(_tether_distance(x, tether.as_array()))
    tilt = max(abs(state.phi), abs(state.theta)) > math.radians(tether.tilt_limit_deg)
    excursion = abs(math.atan2(math.sin(state.psi - start_yaw), math.cos(state.psi - start_yaw)))
    # unwrapped excursion beyond 180 deg is also a violation
    excursion = max(excursion, abs(state.psi - start_yaw))
    return TetherViolation(
        radius=dist > tether.radius,
        tilt=tilt,
        yaw=excursion > math.radians(tether.yaw_limit_deg),
        distance=dist,
    )


def clamp_tether(state: VehicleState, tether: TetherConfig) -> VehicleState:
    x = state.to_array()
    _clamp_tether(x, tether.as_array())
    return VehicleState.from_array(x)
