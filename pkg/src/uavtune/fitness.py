"""Per-cycle compound fitness, accumulated at the 250 Hz control rate."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np
from numba import njit

from .dynamics import H, P, PE, PHI, PN, PSI, Q, THETA, VE, VH, VN

CONTROL_RATE = 250.0
CYCLE_MAX = 10.0
COMPONENTS = ("f_p", "f_h", "f_psi", "f_a", "f_vh", "f_vv", "f_omega", "f_l")


class FitnessConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FitnessLimits:
    """Full and core error ranges. Distances in m, angles in deg, rates per s."""

    l_p: float = 0.2
    l_pc: float = 0.07
    l_h: float = 0.2
    l_hc: float = 0.03
    l_psi: float = 30.0
    l_psic: float = 10.0
    l_a: float = 15.0
    l_ac: float = 3.0
    l_vh: float = 1.0
    l_vhc: float = 0.2
    l_vv: float = 1.0
    l_vvc: float = 0.1
    l_w: float = 250.0
    l_wc: float = 30.0

    def __post_init__(self):
        vals = astuple(self)
        for full, core in zip(vals[::2], vals[1::2]):
            if not 0 < core < full:
                raise FitnessConfigError("each core range must be positive and below its full range")

    def pairs(self) -> list[tuple[float, float]]:
        vals = astuple(self)
        return list(zip(vals[::2], vals[1::2]))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass
class FitnessBreakdown:
    f_p: float
    f_h: float
    f_psi: float
    f_a: float
    f_vh: float
    f_vv: float
    f_omega: float
    f_l: float

    @property
    def total(self) -> float:
        return (self.f_a + self.f_vh + self.f_vv + self.f_h + self.f_psi + self.f_p
                + self.f_omega + self.f_l)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))


@njit(cache=True)
def _kernel(e, l, lc):
    if e > lc:
        return max((l - e) / (4.0 * (l - lc)), 0.0)
    return 3.0 * (lc - e) / (4.0 * lc) + 0.25


def kernel(e: float, l: float, l_c: float) -> float:
    """Piecewise-linear score in [0, 1]: 1 at zero error, 1/4 at the core range, 0 at the full range."""
    if not 0 < l_c < l:
        raise FitnessConfigError(f"need 0 < l_c < l, got l_c={l_c}, l={l}")
    if e < 0:
        raise FitnessConfigError("error magnitude must be non-negative")
    return _kernel(float(e), float(l), float(l_c))


@njit(cache=True)
def wrap(angle):
    """Principal value of an angle in radians, in (-pi, pi]."""
    r = math.atan2(math.sin(angle), math.cos(angle))
    if r <= -math.pi:
        r = math.pi
    return r


@njit(cache=True)
def _cycle(est, sp, att_sp, sat, lim, out):
    dn = sp[0] - est[PN]
    de = sp[1] - est[PE]
    out[0] = _kernel(math.sqrt(dn * dn + de * de), lim[0], lim[1])
    out[1] = _kernel(abs(sp[2] - est[H]), lim[2], lim[3])
    yaw_err = math.degrees(wrap(math.radians(sp[3]) - est[PSI]))
    out[2] = _kernel(abs(yaw_err), lim[4], lim[5])
    out[3] = (_kernel(abs(att_sp[0] - math.degrees(est[PHI])), lim[6], lim[7])
              + _kernel(abs(att_sp[1] - math.degrees(est[THETA])), lim[6], lim[7]))
    out[4] = _kernel(math.sqrt(est[VN] * est[VN] + est[VE] * est[VE]), lim[8], lim[9])
    out[5] = _kernel(abs(est[VH]), lim[10], lim[11])
    out[6] = (_kernel(abs(math.degrees(est[P])), lim[12], lim[13])
              + _kernel(abs(math.degrees(est[Q])), lim[12], lim[13]))
    n_sat = 0
    for k in range(4):
        if sat[k]:
            n_sat += 1
    out[7] = 1.0 - n_sat / 4.0
    return out[3] + out[4] + out[5] + out[1] + out[2] + out[0] + out[6] + out[7]


def _as_estimate(estimate) -> np.ndarray:
    if hasattr(estimate, "to_array"):
        estimate = estimate.to_array()
    return np.asarray(estimate, dtype=np.float64)


def cycle_fitness(estimate, setpoint, saturated=(False,) * 4,
                  limits: FitnessLimits | None = None,
                  attitude_setpoint=(0.0, 0.0)) -> FitnessBreakdown:
    """Score one control cycle.

    ``estimate`` is a sensed state (array in VehicleState layout or any object
    with ``to_array``); ``setpoint`` a :class:`~uavtune.controller.Waypoint`
    (yaw in degrees); ``attitude_setpoint`` the outer loop's (roll, pitch)
    setpoint in degrees; ``saturated`` the four command-channel flags.
    """
    limits = limits or FitnessLimits()
    sp = setpoint.as_array() if hasattr(setpoint, "as_array") else np.asarray(setpoint, float)
    out = np.zeros(8)
    _cycle(_as_estimate(estimate), sp, np.asarray(attitude_setpoint, dtype=np.float64),
           np.asarray(saturated, dtype=np.bool_), limits.as_array(), out)
    return FitnessBreakdown(*map(float, out))


def accumulate(total: float, breakdown) -> float:
    if total < 0:
        raise ValueError("running total must be non-negative")
    value = breakdown.total if isinstance(breakdown, FitnessBreakdown) else float(breakdown)
    return total + value


def max_fitness(duration: float, rate: float = CONTROL_RATE) -> float:
    return round(duration * rate) * CYCLE_MAX


def score_trajectory(estimates, setpoints, saturated=None, attitude_setpoints=None,
                     limits: FitnessLimits | None = None) -> float:
    """Accumulated fitness over a scripted sequence of sensed states.

    Rows of ``estimates`` follow the VehicleState array layout; rows of
    ``setpoints`` are (n, e, h, yaw_deg).
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    setpoints = np.atleast_2d(np.asarray(setpoints, dtype=np.float64))
    n = len(estimates)
    if len(setpoints) == 1:
        setpoints = np.repeat(setpoints, n, axis=0)
    sat = np.zeros((n, 4), dtype=np.bool_) if saturated is None else np.asarray(saturated, np.bool_)
    att = np.zeros((n, 2)) if attitude_setpoints is None else np.asarray(attitude_setpoints, float)
    lim = (limits or FitnessLimits()).as_array()
    out = np.zeros(8)
    total = 0.0
    for k in range(n):
        total += _cycle(estimates[k], setpoints[k], att[k], sat[k], lim, out)
    return total
