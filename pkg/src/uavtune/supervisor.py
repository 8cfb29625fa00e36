"""Trial execution: sensing at hardware cadences, safety termination and the
three-repeat success protocol.

A trial is one seeded flight of a waypoint schedule. All per-trial randomness
(start yaw, wind phase, turbulence and sensor noise) is drawn up front from
the trial seed, so a trial is a pure function of (gains, schedule, tether,
environment, seed).
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field

import numpy as np
from numba import njit

from . import schedules
from .controller import RATE_LIMITS, _compute_errors, _mix, _pid_update, _rate_limit, wrap_deg
from .dynamics import (
    _G, _K_THRUST, _MASS, _HOVER_CURRENT, _T_ANCHOR, _T_PULL, _T_RADIUS, _T_YAW,
    H, P, PE, PHI, PN, PSI, PWM_MIN, Q, R, THETA, VE, VH, VN,
    SimulationDiverged, TetherConfig, VehicleParams, WindField, _advance, _wind_vector,
)
from .fitness import COMPONENTS, CONTROL_RATE, FitnessLimits, _cycle
from .schedules import WaypointSchedule

DT = 1.0 / CONTROL_RATE
POSITION_RATE = 60
HEIGHT_RATE = 20
REGRESSION_POINTS = 5

REASONS = (
    "completed", "tilt", "yaw", "angular-rate", "horiz-velocity", "vert-velocity",
    "current", "no-takeoff", "tether-pull", "tether-radius", "diverged", "viable",
)
(COMPLETED, TILT, YAW, ANGULAR_RATE, HORIZ_VELOCITY, VERT_VELOCITY, CURRENT,
 NO_TAKEOFF, TETHER_PULL, TETHER_RADIUS, DIVERGED, VIABLE) = range(len(REASONS))

LOG_COLUMNS = (
    ("t",) + COMPONENTS + ("cumulative",)
    + tuple(f"est_{n}" for n in ("p_n", "p_e", "h", "v_n", "v_e", "v_h",
                                  "phi", "theta", "psi", "p", "q", "r"))
    + ("current", "sp_n", "sp_e", "sp_h", "sp_yaw", "phi_sp", "theta_sp",
       "p_n", "p_e", "h", "phi", "theta", "psi")
)
_C_EST = 10
_C_CURRENT = 22


@dataclass
class TerminationRules:
    roll_deg: float = 60.0
    pitch_deg: float = 15.0
    yaw_error_deg: float = 15.0
    yaw_sustain: float = 0.5
    rate_dps: float = 250.0
    horiz_speed: float = 0.5
    vert_speed: float = 0.25
    current_a: float = 20.0
    takeoff_height: float = 0.02
    takeoff_time: float = 5.0
    taut_time: float = 1.0
    tether_margin: float = 0.01

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass
class SensorNoise:
    """1-sigma noise of each sensed channel, as first-order Gauss-Markov
    processes sharing ``correlation_time`` (seconds; 0 gives white noise)."""

    attitude_deg: float = 0.5
    rate_dps: float = 1.0
    position_m: float = 0.005
    height_m: float = 0.003
    correlation_time: float = 0.5

    @classmethod
    def none(cls) -> "SensorNoise":
        return cls(0.0, 0.0, 0.0, 0.0)

    @property
    def silent(self) -> bool:
        return not (self.attitude_deg or self.rate_dps or self.position_m or self.height_m)


@dataclass
class Environment:
    """Everything about a trial except the gains, schedule, tether and seed."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    wind: WindField = field(default_factory=WindField)
    noise: SensorNoise = field(default_factory=SensorNoise)
    rules: TerminationRules = field(default_factory=TerminationRules)
    limits: FitnessLimits = field(default_factory=FitnessLimits)
    # draw a fresh fan phase per trial (added to wind.phase)
    random_wind_phase: bool = True
    start_yaw_range_deg: float = 60.0

    @classmethod
    def calm(cls) -> "Environment":
        """No wind, no sensor noise."""
        return cls(wind=WindField(mean_speed=0.0, turbulence=0.0), noise=SensorNoise.none())


@dataclass
class SensedState:
    p_n: float
    p_e: float
    h: float
    v_n: float
    v_e: float
    v_h: float
    phi: float
    theta: float
    psi: float
    p: float
    q: float
    r: float

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass
class TrialOutcome:
    fitness: float
    reason: str
    duration: float
    seed: int
    components: np.ndarray
    schedule: str = ""
    log: np.ndarray | None = None

    @property
    def completed(self) -> bool:
        return self.reason == "completed"

    def to_record(self) -> dict:
        return {
            "fitness": self.fitness,
            "fitness_hex": float(self.fitness).hex(),
            "reason": self.reason,
            "duration": self.duration,
            "seed": self.seed,
            "schedule": self.schedule,
            "components": dict(zip(COMPONENTS, map(float, self.components))),
        }


@dataclass
class Evaluation:
    fitness: float
    success: bool
    outcomes: list[TrialOutcome]


# --------------------------------------------------------------------------
# sensing

@njit(cache=True)
def _slope(ts, xs, n):
    tm = 0.0
    xm = 0.0
    for i in range(n):
        tm += ts[i]
        xm += xs[i]
    tm /= n
    xm /= n
    num = 0.0
    den = 0.0
    for i in range(n):
        num += (ts[i] - tm) * (xs[i] - xm)
        den += (ts[i] - tm) * (ts[i] - tm)
    return num / den


@njit(cache=True)
def _push(buf, value):
    for i in range(buf.shape[0] - 1):
        buf[i] = buf[i + 1]
    buf[buf.shape[0] - 1] = value


@njit(cache=True)
def _gauss_markov(white, sigma, a):
    out = np.empty_like(white)
    if white.shape[0] == 0:
        return out
    s = sigma * math.sqrt(1.0 - a * a)
    out[0] = sigma * white[0]
    for k in range(1, white.shape[0]):
        out[k] = a * out[k - 1] + s * white[k]
    return out


class _Sensors:
    """Stateful sensor model used outside the compiled trial loop (tests, tools)."""

    def __init__(self):
        self.pos_t = np.zeros(REGRESSION_POINTS)
        self.pos_n = np.zeros(REGRESSION_POINTS)
        self.pos_e = np.zeros(REGRESSION_POINTS)
        self.h_t = np.zeros(REGRESSION_POINTS)
        self.h_v = np.zeros(REGRESSION_POINTS)
        self.n_pos = 0
        self.n_h = 0
        self.last_pos = -1
        self.last_h = -1
        self.est = np.zeros(12)


def sensor_history() -> _Sensors:
    return _Sensors()


def sample_sensors(truth, t: float, history: _Sensors, rng=None,
                   noise: SensorNoise | None = None) -> SensedState:
    """Sample the truth state at time ``t`` into ``history``'s held estimate.

    Attitude and rates refresh every call; position refreshes on 60 Hz
    boundaries and height on 20 Hz boundaries, with velocities from the
    least-squares slope of the last five estimates (0 until five exist).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    noise = noise or SensorNoise.none()
    x = truth.to_array() if hasattr(truth, "to_array") else np.asarray(truth, float)

    def draw(sigma):
        return 0.0 if rng is None or sigma == 0 else float(rng.normal(0.0, sigma))

    est = history.est
    est[PHI] = x[PHI] + math.radians(draw(noise.attitude_deg))
    est[THETA] = x[THETA] + math.radians(draw(noise.attitude_deg))
    est[PSI] = math.atan2(math.sin(x[PSI] + math.radians(draw(noise.attitude_deg))),
                          math.cos(x[PSI] + math.radians(draw(noise.attitude_deg))))
    for k in (P, Q, R):
        est[k] = x[k] + math.radians(draw(noise.rate_dps))
    tick = int(round(t * CONTROL_RATE))
    pi = tick * POSITION_RATE // int(CONTROL_RATE)
    if pi != history.last_pos:
        history.last_pos = pi
        est[PN] = x[PN] + draw(noise.position_m)
        est[PE] = x[PE] + draw(noise.position_m)
        _push(history.pos_t, t)
        _push(history.pos_n, est[PN])
        _push(history.pos_e, est[PE])
        history.n_pos += 1
        if history.n_pos >= REGRESSION_POINTS:
            est[VN] = _slope(history.pos_t, history.pos_n, REGRESSION_POINTS)
            est[VE] = _slope(history.pos_t, history.pos_e, REGRESSION_POINTS)
    hi = tick * HEIGHT_RATE // int(CONTROL_RATE)
    if hi != history.last_h:
        history.last_h = hi
        est[H] = x[H] + draw(noise.height_m)
        _push(history.h_t, t)
        _push(history.h_v, est[H])
        history.n_h += 1
        if history.n_h >= REGRESSION_POINTS:
            est[VH] = _slope(history.h_t, history.h_v, REGRESSION_POINTS)
    return SensedState(*map(float, est))


# --------------------------------------------------------------------------
# the compiled trial loop

@njit(cache=True, nogil=True)
def _trial_kernel(gains, sched_t, sched_wp, n_ticks, params, tether, wind, wind_noise,
                  att_noise, rate_noise, pos_noise, h_noise, init_yaw, flim, rules,
                  viability_time, log, comp_sum):
    x = np.zeros(18)
    x[PSI] = init_yaw
    for i in range(6):
        x[12 + i] = PWM_MIN
    cs = np.zeros((5, 6))
    att_sp = np.zeros(2)
    est = np.zeros(12)
    pos_t = np.zeros(5)
    pos_n = np.zeros(5)
    pos_e = np.zeros(5)
    h_t = np.zeros(5)
    h_v = np.zeros(5)
    n_pos = 0
    n_h = 0
    last_pos = -1
    last_h = -1
    sp = np.zeros(4)
    target = np.zeros(4)
    err = np.zeros(6)
    delta = np.zeros(4)
    sat = np.zeros(4, dtype=np.bool_)
    upd = np.zeros(6, dtype=np.bool_)
    pwm = np.full(6, PWM_MIN)
    fit = np.zeros(8)
    rates = np.array([0.1, 0.1, 0.2, 30.0])

    roll_lim = math.radians(rules[0])
    pitch_lim = math.radians(rules[1])
    rate_lim = math.radians(rules[4])
    current_scale = params[_HOVER_CURRENT] * params[_K_THRUST] / (params[_MASS] * params[_G])
    start_yaw_deg = 0.0
    total = 0.0
    airborne = False
    streak = 0.0
    yaw_bad = 0.0
    taut_for = 0.0
    reason = COMPLETED
    ticks = n_ticks
    wp_idx = 0
    logging = log.shape[0] > 0

    for k in range(n_ticks):
        t = k * DT
        # --- sensing
        est[PHI] = x[PHI] + att_noise[k, 0]
        est[THETA] = x[THETA] + att_noise[k, 1]
        yaw = x[PSI] + att_noise[k, 2]
        est[PSI] = math.atan2(math.sin(yaw), math.cos(yaw))
        est[P] = x[P] + rate_noise[k, 0]
        est[Q] = x[Q] + rate_noise[k, 1]
        est[R] = x[R] + rate_noise[k, 2]
        upd[0] = True
        upd[1] = True
        upd[2] = True
        upd[3] = False
        upd[4] = False
        upd[5] = False
        pi = (k * POSITION_RATE) // 250
        if pi != last_pos:
            last_pos = pi
            est[PN] = x[PN] + pos_noise[pi, 0]
            est[PE] = x[PE] + pos_noise[pi, 1]
            _push(pos_t, t)
            _push(pos_n, est[PN])
            _push(pos_e, est[PE])
            n_pos += 1
            if n_pos >= 5:
                est[VN] = _slope(pos_t, pos_n, 5)
                est[VE] = _slope(pos_t, pos_e, 5)
            upd[4] = True
            upd[5] = True
        hi = (k * HEIGHT_RATE) // 250
        if hi != last_h:
            last_h = hi
            est[H] = x[H] + h_noise[hi]
            _push(h_t, t)
            _push(h_v, est[H])
            n_h += 1
            if n_h >= 5:
                est[VH] = _slope(h_t, h_v, 5)
            upd[3] = True

        # --- setpoint
        if k == 0:
            sp[0] = est[PN]
            sp[1] = est[PE]
            sp[2] = est[H]
            sp[3] = math.degrees(est[PSI])
            start_yaw_deg = sp[3]
        while wp_idx + 1 < sched_t.shape[0] and sched_t[wp_idx + 1] <= t + 1e-9:
            wp_idx += 1
        for c in range(4):
            target[c] = sched_wp[wp_idx, c]
        if math.isnan(target[3]):
            target[3] = start_yaw_deg
        _rate_limit(sp, target, DT, rates)

        # --- termination rules on the sensed state
        if est[H] > rules[8]:
            airborne = True
        yaw_err = abs(wrap_deg(math.degrees(est[PSI]) - sp[3]))
        if airborne and yaw_err > rules[2]:
            yaw_bad += DT
        else:
            yaw_bad = 0.0
        dz = est[H] - tether[_T_ANCHOR]
        dist = math.sqrt(est[PN] * est[PN] + est[PE] * est[PE] + dz * dz)
        if dist >= tether[_T_RADIUS] - rules[11]:
            taut_for += DT
        else:
            taut_for = 0.0
        current = 0.0
        for i in range(6):
            current += pwm[i] - PWM_MIN
        current *= current_scale

        if abs(est[PHI]) > roll_lim or abs(est[THETA]) > pitch_lim:
            reason = TILT
        elif yaw_bad > rules[3] + 1e-9 or abs(wrap_deg(math.degrees(est[PSI]) - start_yaw_deg)) > tether[_T_YAW]:
            reason = YAW
        elif abs(est[P]) > rate_lim or abs(est[Q]) > rate_lim or abs(est[R]) > rate_lim:
            reason = ANGULAR_RATE
        elif abs(est[VN]) > rules[5] or abs(est[VE]) > rules[5]:
            reason = HORIZ_VELOCITY
        elif abs(est[VH]) > rules[6]:
            reason = VERT_VELOCITY
        elif current > rules[7]:
            reason = CURRENT
        elif not airborne and t >= rules[9] - 1e-9:
            reason = NO_TAKEOFF
        elif dz > tether[_T_PULL]:
            reason = TETHER_PULL
        elif taut_for > rules[10] + 1e-9:
            reason = TETHER_RADIUS

        if not reason:
            # --- control
            _compute_errors(est, sp, att_sp, err)
            _pid_update(err, gains, cs, att_sp, DT, upd, est[PSI], delta, sat)
            _mix(delta, PWM_MIN, pwm)
            # --- fitness
            total += _cycle(est, sp, att_sp, sat, flim, fit)
            for c in range(8):
                comp_sum[c] += fit[c]
        else:
            for c in range(8):
                fit[c] = 0.0

        if logging:
            log[k, 0] = t
            for c in range(8):
                log[k, 1 + c] = fit[c]
            log[k, 9] = total
            for c in range(12):
                log[k, _C_EST + c] = est[c]
            log[k, _C_CURRENT] = current
            for c in range(4):
                log[k, 23 + c] = sp[c]
            log[k, 27] = att_sp[0]
            log[k, 28] = att_sp[1]
            log[k, 29] = x[PN]
            log[k, 30] = x[PE]
            log[k, 31] = x[H]
            log[k, 32] = x[PHI]
            log[k, 33] = x[THETA]
            log[k, 34] = x[PSI]

        if reason:
            ticks = k
            break

        if viability_time > 0.0:
            if est[H] > rules[8]:
                streak += DT
                if streak >= viability_time - 1e-9:
                    reason = VIABLE
                    ticks = k + 1
                    break
            else:
                streak = 0.0

        # --- plant
        wn, we = _wind_vector(t, wind, wind_noise[k])
        taut, ok = _advance(x, pwm, wn, we, params, tether, DT)
        if not ok:
            reason = DIVERGED
            ticks = k + 1
            break
    return total, reason, ticks


# --------------------------------------------------------------------------
# trial set-up

def _draws(seed: int, n_ticks: int, env: Environment):
    rng = np.random.default_rng(seed)
    span = env.start_yaw_range_deg
    init_yaw = math.radians(rng.uniform(-span, span))
    phase = rng.uniform(0.0, 2.0 * math.pi) if env.random_wind_phase else 0.0
    n_pos = n_ticks * POSITION_RATE // 250 + 2
    n_h = n_ticks * HEIGHT_RATE // 250 + 2
    nz = env.noise
    tau = nz.correlation_time

    def channel(shape, sigma, rate):
        if sigma == 0:
            return np.zeros(shape)
        white = rng.standard_normal(shape)
        a = math.exp(-1.0 / (rate * tau)) if tau > 0 else 0.0
        if white.ndim == 1:
            return _gauss_markov(white, sigma, a)
        return np.column_stack([_gauss_markov(np.ascontiguousarray(white[:, i]), sigma, a)
                                for i in range(white.shape[1])])

    wind_noise = rng.standard_normal(n_ticks) if env.wind.turbulence > 0 else np.zeros(n_ticks)
    att = channel((n_ticks, 3), math.radians(nz.attitude_deg), CONTROL_RATE)
    rate = channel((n_ticks, 3), math.radians(nz.rate_dps), CONTROL_RATE)
    pos = channel((n_pos, 2), nz.position_m, POSITION_RATE)
    hgt = channel(n_h, nz.height_m, HEIGHT_RATE)
    return init_yaw, phase, wind_noise, att, rate, pos, hgt


def _rerun_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed, attempt]).generate_state(1, np.uint64)[0] >> 1)


def simulate(gains, schedule: WaypointSchedule, tether: TetherConfig, seed: int,
             env: Environment | None = None, log: bool = False,
             viability_time: float = 0.0) -> TrialOutcome:
    """Run one trial without divergence handling. Most callers want :func:`run_trial`."""
    env = env or Environment()
    g = np.asarray(getattr(gains, "values", gains), dtype=np.float64)
    if g.shape != (18,) or not np.all(np.isfinite(g)):
        raise ValueError("gains must be 18 finite values")
    n_ticks = int(round(schedule.duration * CONTROL_RATE))
    init_yaw, phase, wnoise, att, rate, pos, hgt = _draws(int(seed), n_ticks, env)
    wind = env.wind.as_array()
    wind[4] += phase
    sched_t, sched_wp = schedule.arrays()
    log_arr = np.zeros((n_ticks, len(LOG_COLUMNS)) if log else (0, len(LOG_COLUMNS)))
    comp = np.zeros(8)
    total, reason, ticks = _trial_kernel(
        g, sched_t, sched_wp, n_ticks, env.vehicle.as_array(), tether.as_array(), wind,
        wnoise, att, rate, pos, hgt, init_yaw, env.limits.as_array(), env.rules.as_array(),
        float(viability_time), log_arr, comp,
    )
    if log:
        log_arr = log_arr[: min(n_ticks, ticks + 1)]
    return TrialOutcome(
        fitness=float(total), reason=REASONS[reason], duration=ticks * DT, seed=int(seed),
        components=comp, schedule=schedule.name, log=log_arr if log else None,
    )


def run_trial(gains, schedule: WaypointSchedule, tether: TetherConfig, seed: int,
              env: Environment | None = None, log: bool = False,
              max_reruns: int = 3) -> TrialOutcome:
    """Fly ``schedule`` once. A diverged simulation is re-flown with a fresh
    seed derived from ``seed``; persistent divergence raises."""
    if not schedule.times:
        raise ValueError("empty schedule")
    s = int(seed)
    for attempt in range(max_reruns + 1):
        out = simulate(gains, schedule, tether, s, env, log=log)
        if out.reason != "diverged":
            return out
        s = _rerun_seed(int(seed), attempt + 1)
    raise SimulationDiverged(f"trial diverged on {max_reruns + 1} seeds (base seed {seed})")


def evaluate(gains, schedule: WaypointSchedule, tether: TetherConfig, seeds,
             env: Environment | None = None, repeats: int = 3) -> Evaluation:
    """Fly once; a completed flight earns ``repeats - 1`` re-flights.

    Fitness is the mean over the flights performed. Success needs every
    repeat completed; the protocol stops at the first failed repeat.
    """
    seeds = list(seeds)
    if len(seeds) < repeats:
        raise ValueError(f"need {repeats} seeds, got {len(seeds)}")
    outcomes = []
    for s in seeds[:repeats]:
        out = run_trial(gains, schedule, tether, s, env)
        outcomes.append(out)
        if not out.completed:
            break
    fitness = float(np.mean([o.fitness for o in outcomes]))
    success = len(outcomes) == repeats and all(o.completed for o in outcomes)
    return Evaluation(fitness, success, outcomes)


VIABILITY_HEIGHT = 0.10
VIABILITY_AIRBORNE = 0.2


def bootstrap_viable(gains, seed: int, tether: TetherConfig | None = None,
                     env: Environment | None = None) -> bool:
    """True if the gains keep the vehicle airborne for 0.2 s hovering at 10 cm."""
    env = env or Environment()
    tether = tether or TetherConfig.ose()
    sched = schedules.hover(VIABILITY_HEIGHT, env.rules.takeoff_time + 1.0, name="viability")
    out = simulate(gains, sched, tether, seed, env, viability_time=VIABILITY_AIRBORNE)
    return out.reason == "viable"
