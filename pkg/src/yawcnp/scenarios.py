"""Parametric driving scenarios and time-stepped simulation.

A :class:`Scenario` pairs closed-form steering/acceleration command profiles
with an initial speed, a friction value and an optional added load.  The
simulator integrates a chosen vehicle model through the scenario with
explicit Euler steps and records the channels a predictor consumes:
time, commanded steering, speed, commanded acceleration and yaw rate.

Steering amplitudes of the catalog profiles are stated as target lateral
accelerations and converted to angles at the instantiated initial speed, so
one maneuver produces comparable demand across the 0-120 km/h range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import (IX_BETA, IX_DELTA, IX_PSIDOT, IX_V, ControlInput,
                       VehicleState, _model_deriv_t, kst_yaw_rate)
from .errors import (ChannelCountError, InvalidRegimeError,
                     SingularVelocityError, TrajectoryDivergedError)
from .params import VehicleParams

KMH = 1.0 / 3.6                     # km/h -> m/s
SCENARIO_KINDS = ("urban", "interurban", "longitudinal", "lateral",
                  "racetrack", "mountain")

DEFAULT_DT = 0.01                   # recording step [s]
SUBSTEP_TARGET_DT = 0.002           # integration refinement target [s]
DIVERGENCE_LIMIT = 1e6
TRUNCATION_WINDOW = 1.0             # sustained overdemand window [s]
TRUNCATION_MIN_FRACTION = 0.1       # never truncate before this share of the run
SPINOUT_BETA = 0.6                  # sideslip beyond which the run is over [rad]
MAX_STEER = 0.45                    # catalog steering amplitude cap [rad]

Profile = Callable[[float], float]


@dataclass(frozen=True)
class Scenario:
    id: str
    kind: str
    duration: float
    dt: float
    steering_profile: Profile
    accel_profile: Profile
    v0: float
    mu: float
    mass_extra: float = 0.0
    profile_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise InvalidRegimeError(f"unknown scenario kind {self.kind!r}")
        if not (self.duration > 0 and 0 < self.dt <= 0.05):
            raise InvalidRegimeError("duration must be positive and dt in (0, 0.05]")
        if self.v0 < 0 or not (0 < self.mu <= 1.2):
            raise InvalidRegimeError("v0 must be >= 0 and mu in (0, 1.2]")


@dataclass
class TimeSeries:
    """Uniformly sampled channels recorded from one scenario run."""

    t: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    a_long: np.ndarray
    psi_dot: np.ndarray
    meta: dict

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


# ---------------------------------------------------------------------------
# integrators


def euler_step(f, state: VehicleState, u: ControlInput, dt: float) -> VehicleState:
    """One explicit Euler step, state + dt * f(state, u)."""
    if dt <= 0:
        raise InvalidRegimeError("dt must be positive")
    return VehicleState.from_array(state.as_array() + dt * f(state, u).as_array())


def rk4_step(f, state: VehicleState, u: ControlInput, dt: float) -> VehicleState:
    """One classical 4-stage Runge-Kutta step with the control held constant."""
    if dt <= 0:
        raise InvalidRegimeError("dt must be positive")
    s0 = state.as_array()
    k1 = f(VehicleState.from_array(s0), u).as_array()
    k2 = f(VehicleState.from_array(s0 + 0.5 * dt * k1), u).as_array()
    k3 = f(VehicleState.from_array(s0 + 0.5 * dt * k2), u).as_array()
    k4 = f(VehicleState.from_array(s0 + dt * k3), u).as_array()
    return VehicleState.from_array(s0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _clamp_v(s: tuple) -> tuple:
    if s[IX_V] < 0.0:
        return s[:IX_V] + (0.0,) + s[IX_V + 1:]
    return s


def _euler_substep(kind: str, s: tuple, u: ControlInput, p: VehicleParams,
                   dt: float, substeps: int) -> tuple:
    h = dt / substeps
    for _ in range(substeps):
        d = _model_deriv_t(kind, s, u, p)
        s = _clamp_v((s[0] + h * d[0], s[1] + h * d[1], s[2] + h * d[2],
                      s[3] + h * d[3], s[4] + h * d[4], s[5] + h * d[5],
                      s[6] + h * d[6], s[7] + h * d[7], s[8] + h * d[8]))
    return s


def _rk4_substep(kind: str, s: tuple, u: ControlInput, p: VehicleParams,
                 dt: float, substeps: int) -> tuple:
    h = dt / substeps
    for _ in range(substeps):
        k1 = _model_deriv_t(kind, s, u, p)
        k2 = _model_deriv_t(kind, tuple(a + 0.5 * h * b for a, b in zip(s, k1)), u, p)
        k3 = _model_deriv_t(kind, tuple(a + 0.5 * h * b for a, b in zip(s, k2)), u, p)
        k4 = _model_deriv_t(kind, tuple(a + h * b for a, b in zip(s, k3)), u, p)
        s = _clamp_v(tuple(a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                           for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)))
    return s


def _hold_derived(kind: str, s: tuple, p: VehicleParams) -> tuple:
    # under the kinematic model the yaw rate, slip angle and wheel speeds are
    # derived quantities, not integrated states
    if kind != "kst":
        return s
    v = s[IX_V]
    w = v / p.R_w
    return (s[0], s[1], s[2], kst_yaw_rate(v, s[IX_DELTA], p.l_wb), v,
            0.0, s[IX_DELTA], w, w)


def initial_state(v0: float, delta0: float, p: VehicleParams) -> VehicleState:
    """Steady straight-driving state: zero sideslip, free-rolling wheels."""
    return VehicleState(v=v0, delta=delta0,
                        psi_dot=kst_yaw_rate(v0, delta0, p.l_wb),
                        omega_f=v0 / p.R_w, omega_r=v0 / p.R_w)


def default_substeps(dt: float) -> int:
    return max(1, math.ceil(dt / SUBSTEP_TARGET_DT - 1e-12))


def simulate(model: str, scenario: Scenario, p: VehicleParams, *,
             substeps: int | None = None, integrator: str = "euler",
             truncate_infeasible: bool = True) -> TimeSeries:
    """Integrate a vehicle model through a scenario and record its channels.

    The friction and added load of the scenario override the vehicle
    parameters before integration.  Recording happens on the scenario's dt
    grid; each recording step is refined into explicit substeps so the stiff
    wheel-slip mode of the drift model stays stable.  Runs whose commanded
    lateral acceleration exceeds the friction limit for a sustained window
    are cut short (the vehicle would leave the road), which yields time
    series of different lengths.
    """
    p_run = p.with_friction(scenario.mu).with_added_mass(scenario.mass_extra)
    dt = scenario.dt
    n_sub = default_substeps(dt) if substeps is None else substeps
    n_steps = int(round(scenario.duration / dt))
    stepper = _euler_substep if integrator == "euler" else _rk4_substep

    s = initial_state(scenario.v0, scenario.steering_profile(0.0), p_run).as_tuple()
    rows_t = np.empty(n_steps + 1)
    rows = np.empty((n_steps + 1, 4))
    min_keep = max(20, int(TRUNCATION_MIN_FRACTION * n_steps))
    overdemand = 0
    window = int(round(TRUNCATION_WINDOW / dt))
    n_recorded = n_steps + 1

    for k in range(n_steps + 1):
        t = k * dt
        delta_cmd = scenario.steering_profile(t)
        a_cmd = scenario.accel_profile(t)
        rows_t[k] = t
        rows[k, 0] = delta_cmd
        rows[k, 1] = s[IX_V]
        rows[k, 2] = a_cmd
        rows[k, 3] = s[IX_PSIDOT]

        if truncate_infeasible and k >= min_keep:
            # the driver keeps commanding the same maneuver regardless of grip;
            # sustained overdemand or a spin means the vehicle left the road
            demand = s[IX_V] ** 2 * abs(math.tan(delta_cmd)) / p_run.l_wb
            overdemand = overdemand + 1 if demand > p_run.mu * p_run.g else 0
            if overdemand >= window or abs(s[IX_BETA]) > SPINOUT_BETA:
                n_recorded = k + 1
                break

        if k == n_steps:
            break
        u = ControlInput(delta_cmd=delta_cmd, a_long=a_cmd)
        try:
            s = stepper(model, s, u, p_run, dt, n_sub)
        except SingularVelocityError:
            # slip kinematics left their domain (deep spin); end the run here
            if truncate_infeasible and k + 1 >= min_keep:
                n_recorded = k + 1
                break
            raise TrajectoryDivergedError(scenario.id, k + 1)
        s = _hold_derived(model, s, p_run)
        if not all(math.isfinite(x) for x in s) or max(abs(x) for x in s) > DIVERGENCE_LIMIT:
            raise TrajectoryDivergedError(scenario.id, k + 1)

    meta = {"scenario": scenario.id, "kind": scenario.kind, "mu": scenario.mu,
            "vehicle": p.vehicle_id, "mass_extra": scenario.mass_extra,
            "dt": dt, "model": model, "v0": scenario.v0}
    return TimeSeries(t=rows_t[:n_recorded].copy(),
                      delta=rows[:n_recorded, 0].copy(),
                      v=rows[:n_recorded, 1].copy(),
                      a_long=rows[:n_recorded, 2].copy(),
                      psi_dot=rows[:n_recorded, 3].copy(),
                      meta=meta)


# ---------------------------------------------------------------------------
# profile primitives (all closed-form piecewise functions of time)


def _steer_hold(t0: float, amp: float) -> Profile:
    return lambda t: amp if t >= t0 else 0.0


def _steer_ramp(t0: float, rate: float, cap: float) -> Profile:
    def f(t):
        if t < t0:
            return 0.0
        val = rate * (t - t0)
        return math.copysign(min(abs(val), cap), val)
    return f


def _steer_sine(t0: float, amp: float, freq: float) -> Profile:
    return lambda t: amp * math.sin(2.0 * math.pi * freq * (t - t0)) if t >= t0 else 0.0


def _steer_chirp(t0: float, amp: float, f0: float, f1: float, span: float) -> Profile:
    def f(t):
        if t < t0:
            return 0.0
        tau = min(t - t0, span)
        freq = f0 + (f1 - f0) * tau / (2.0 * span)
        return amp * math.sin(2.0 * math.pi * freq * tau)
    return f


def _pulses(segments: list[tuple[float, float, float]]) -> Profile:
    """Sum of rectangular pulses (t_on, duration, amplitude)."""
    def f(t):
        val = 0.0
        for t_on, dur, amp in segments:
            if t_on <= t < t_on + dur:
                val += amp
        return val
    return f


def _zero(_t: float) -> float:
    return 0.0


# ---------------------------------------------------------------------------
# scenario catalog


@dataclass(frozen=True)
class ProfileSpec:
    """One scenario kind: steering demand signature plus speed range."""

    id: str
    kind: str
    duration: float
    v_kmh: tuple[float, float, float]
    # steering pulses given as (t_on, duration, lateral-acceleration target)
    steer_pulses: tuple = ()
    steer_shape: str = "pulses"          # pulses | hold | ramp | sine | chirp | none
    steer_args: dict = field(default_factory=dict)
    accel_segments: tuple = ()           # (t_on, duration, a_long)


def _amp_from_demand(a_lat: float, v0: float, l_wb: float) -> float:
    """Steering angle that demands a_lat at speed v0, capped for realism."""
    v_ref = max(v0, 3.0)
    amp = math.copysign(math.atan(abs(a_lat) * l_wb / v_ref ** 2), a_lat)
    return math.copysign(min(abs(amp), MAX_STEER), amp)


def _build_steering(spec: ProfileSpec, v0: float, l_wb: float) -> Profile:
    if spec.steer_shape == "none":
        return _zero
    if spec.steer_shape == "pulses":
        segs = [(t_on, dur, _amp_from_demand(a, v0, l_wb))
                for t_on, dur, a in spec.steer_pulses]
        return _pulses(segs)
    a = spec.steer_args
    amp = _amp_from_demand(a["a_lat"], v0, l_wb)
    if spec.steer_shape == "hold":
        return _steer_hold(a["t0"], amp)
    if spec.steer_shape == "ramp":
        return _steer_ramp(a["t0"], a["rate_frac"] * amp, abs(amp))
    if spec.steer_shape == "sine":
        return _steer_sine(a["t0"], amp, a["freq"])
    if spec.steer_shape == "chirp":
        return _steer_chirp(a["t0"], amp, a["f0"], a["f1"], spec.duration - a["t0"])
    raise ValueError(f"unknown steer shape {spec.steer_shape!r}")


def _turn_sequence(rng: np.random.Generator, t0: float, t_end: float,
                   a_range: tuple[float, float], dur_range: tuple[float, float],
                   gap_range: tuple[float, float]) -> tuple:
    """Alternating-sign turn pulses covering [t0, t_end]."""
    pulses = []
    t = t0
    sign = 1.0 if rng.random() < 0.5 else -1.0
    while t < t_end:
        dur = float(rng.uniform(*dur_range))
        a = float(rng.uniform(*a_range)) * sign
        pulses.append((round(t, 3), round(dur, 3), round(a, 3)))
        t += dur + float(rng.uniform(*gap_range))
        sign = -sign
    return tuple(pulses)


def _accel_sequence(rng: np.random.Generator, t0: float, t_end: float,
                    a_range: tuple[float, float]) -> tuple:
    segs = []
    t = t0
    sign = 1.0
    while t < t_end:
        dur = float(rng.uniform(1.0, 3.0))
        segs.append((round(t, 3), round(dur, 3), round(sign * rng.uniform(*a_range), 3)))
        t += dur + float(rng.uniform(0.5, 2.0))
        sign = -sign
    return tuple(segs)


def _urban_spec(rng, ident, duration=16.0, v_kmh=(20.0, 35.0, 50.0)) -> ProfileSpec:
    return ProfileSpec(
        id=ident, kind="urban", duration=duration, v_kmh=v_kmh,
        steer_pulses=_turn_sequence(rng, 0.6, duration - 2.0, (1.5, 4.0),
                                    (1.2, 2.5), (0.8, 2.0)),
        accel_segments=_accel_sequence(rng, 2.0, duration - 2.0, (0.5, 1.5)))


def _interurban_spec(rng, ident, duration=16.0, v_kmh=(50.0, 75.0, 100.0)) -> ProfileSpec:
    return ProfileSpec(
        id=ident, kind="interurban", duration=duration, v_kmh=v_kmh,
        steer_pulses=_turn_sequence(rng, 0.7, duration - 2.0, (0.8, 2.5),
                                    (2.0, 4.0), (1.0, 2.5)),
        accel_segments=_accel_sequence(rng, 3.0, duration - 3.0, (0.3, 1.0)))


def _longitudinal_spec(rng, ident, duration=12.0, v_kmh=(0.0, 30.0, 60.0)) -> ProfileSpec:
    a_acc = round(float(rng.uniform(1.5, 3.0)), 3)
    a_brk = round(-float(rng.uniform(1.0, 2.5)), 3)
    t_sw = round(float(rng.uniform(4.0, 6.0)), 3)
    return ProfileSpec(
        id=ident, kind="longitudinal", duration=duration, v_kmh=v_kmh,
        steer_shape="none",
        accel_segments=((0.5, t_sw, a_acc), (t_sw + 1.5, duration - t_sw - 2.0, a_brk)))


def _racetrack_spec(rng, ident, duration=24.0, v_kmh=(60.0, 90.0, 120.0)) -> ProfileSpec:
    return ProfileSpec(
        id=ident, kind="racetrack", duration=duration, v_kmh=v_kmh,
        steer_pulses=_turn_sequence(rng, 0.8, duration - 2.0, (2.5, 6.5),
                                    (1.0, 2.5), (0.6, 1.8)),
        accel_segments=_accel_sequence(rng, 1.0, duration - 2.0, (1.5, 3.5)))


def _mountain_spec(rng, ident, duration=20.0, v_kmh=(20.0, 40.0, 60.0)) -> ProfileSpec:
    return ProfileSpec(
        id=ident, kind="mountain", duration=duration, v_kmh=v_kmh,
        steer_pulses=_turn_sequence(rng, 0.7, duration - 2.0, (2.5, 5.0),
                                    (1.5, 3.0), (0.5, 1.2)),
        accel_segments=_accel_sequence(rng, 1.5, duration - 2.0, (0.8, 2.0)))


def _lateral_specs(rng, prefix: str) -> list[ProfileSpec]:
    """Fourteen lateral maneuvers: steps, sines, lane-change trains, slaloms, ramps."""
    v = (40.0, 75.0, 110.0)
    specs = []
    for i, a_lat in enumerate(rng.uniform(1.5, 3.0) * np.array([1.0, 1.8, 2.6])):
        specs.append(ProfileSpec(
            id=f"{prefix}-step{i}", kind="lateral", duration=10.0, v_kmh=v,
            steer_shape="hold", steer_args={"t0": 0.6, "a_lat": round(float(a_lat), 3)}))
    for i, (a_lat, freq) in enumerate(zip(
            rng.uniform(1.2, 2.5) * np.array([1.0, 1.7, 2.4]),
            (0.25, 0.4, 0.55))):
        specs.append(ProfileSpec(
            id=f"{prefix}-sine{i}", kind="lateral", duration=10.0, v_kmh=v,
            steer_shape="sine",
            steer_args={"t0": 0.5, "a_lat": round(float(a_lat), 3), "freq": freq}))
    for i, a_lat in enumerate(rng.uniform(2.0, 3.5) * np.array([1.0, 1.6, 2.2])):
        # train of S-shaped lane changes sustained over the horizon
        period = 3.0 + 0.8 * i
        pulses = []
        t = 0.6
        while t < 9.0:
            pulses.append((round(t, 3), round(period / 2, 3), round(float(a_lat), 3)))
            pulses.append((round(t + period / 2, 3), round(period / 2, 3),
                           round(-float(a_lat), 3)))
            t += period + 0.6
        specs.append(ProfileSpec(
            id=f"{prefix}-lane{i}", kind="lateral", duration=10.0, v_kmh=v,
            steer_pulses=tuple(pulses)))
    for i, (a_lat, freq) in enumerate(zip(
            rng.uniform(1.5, 2.8) * np.array([1.0, 1.5, 2.0]),
            (0.15, 0.3, 0.5))):
        specs.append(ProfileSpec(
            id=f"{prefix}-sweep{i}", kind="lateral", duration=10.0, v_kmh=v,
            steer_shape="chirp",
            steer_args={"t0": 0.5, "a_lat": round(float(a_lat), 3),
                        "f0": freq, "f1": freq * 3.0}))
    for i, a_lat in enumerate(rng.uniform(2.0, 4.0) * np.array([1.0, 1.8])):
        specs.append(ProfileSpec(
            id=f"{prefix}-ramp{i}", kind="lateral", duration=10.0, v_kmh=v,
            steer_shape="ramp",
            steer_args={"t0": 0.5, "a_lat": round(float(a_lat), 3),
                        "rate_frac": 0.12 + 0.08 * i}))
    return specs


def training_profiles(seed: int) -> list[ProfileSpec]:
    """Twenty training scenario kinds: 2 urban, 2 interurban, 2 longitudinal, 14 lateral."""
    rng = np.random.default_rng(seed)
    specs = [
        _urban_spec(rng, "train-urban0"),
        _urban_spec(rng, "train-urban1"),
        _interurban_spec(rng, "train-inter0"),
        _interurban_spec(rng, "train-inter1"),
        _longitudinal_spec(rng, "train-long0"),
        _longitudinal_spec(rng, "train-long1"),
    ]
    specs.extend(_lateral_specs(rng, "train-lat"))
    assert len(specs) == 20
    return specs


def holdout_profiles(seed: int) -> list[ProfileSpec]:
    """Seven held-out kinds: 2 urban, 2 interurban, 2 racetrack, 1 mountain pass."""
    rng = np.random.default_rng(seed + 104729)
    return [
        _urban_spec(rng, "hold-urban0"),
        _urban_spec(rng, "hold-urban1"),
        _interurban_spec(rng, "hold-inter0"),
        _interurban_spec(rng, "hold-inter1"),
        _racetrack_spec(rng, "hold-track0"),
        _racetrack_spec(rng, "hold-track1"),
        _mountain_spec(rng, "hold-pass0"),
    ]


def instantiate(spec: ProfileSpec, mu: float, v0_kmh: float, *,
                dt: float = DEFAULT_DT, mass_extra: float = 0.0,
                l_wb: float = 2.5) -> Scenario:
    v0 = v0_kmh * KMH
    steering = _build_steering(spec, v0, l_wb)
    accel = _pulses(list(spec.accel_segments)) if spec.accel_segments else _zero
    params = {"spec": spec.id, "steer_shape": spec.steer_shape,
              "steer_args": dict(spec.steer_args), "pulses": spec.steer_pulses,
              "accel": spec.accel_segments}
    return Scenario(id=f"{spec.id}+mu{mu:g}+v{v0_kmh:g}", kind=spec.kind,
                    duration=spec.duration, dt=dt, steering_profile=steering,
                    accel_profile=accel, v0=v0, mu=mu, mass_extra=mass_extra,
                    profile_params=params)


def instantiate_all(specs: list[ProfileSpec], frictions, *, dt: float = DEFAULT_DT,
                    mass_extra: float = 0.0, l_wb: float = 2.5,
                    velocity_count: int = 3) -> list[Scenario]:
    out = []
    for spec in specs:
        v_grid = spec.v_kmh[:velocity_count]
        for mu in frictions:
            for v_kmh in v_grid:
                out.append(instantiate(spec, mu, v_kmh, dt=dt,
                                       mass_extra=mass_extra, l_wb=l_wb))
    return out


def scenario_catalog(seed: int, frictions=(1.0, 0.5, 0.2), *,
                     dt: float = DEFAULT_DT, velocity_count: int = 3,
                     mass_extra: float = 0.0,
                     l_wb: float = 2.5) -> tuple[list[Scenario], list[Scenario]]:
    """Deterministic catalog of training and held-out scenarios for a seed."""
    train = instantiate_all(training_profiles(seed), frictions, dt=dt,
                            mass_extra=mass_extra, l_wb=l_wb,
                            velocity_count=velocity_count)
    hold = instantiate_all(holdout_profiles(seed), frictions, dt=dt,
                           mass_extra=mass_extra, l_wb=l_wb,
                           velocity_count=velocity_count)
    return train, hold


# ---------------------------------------------------------------------------
# persistence

CSV_HEADER = "t,delta,v,a_long,psi_dot"


def save_timeseries(ts: TimeSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in zip(ts.t, ts.delta, ts.v, ts.a_long, ts.psi_dot):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    side = path.with_suffix(".meta")
    with side.open("w") as fh:
        for key in ("scenario", "kind", "mu", "vehicle", "mass_extra", "dt", "model", "v0"):
            if key in ts.meta:
                fh.write(f"{key} = {ts.meta[key]}\n")


def load_timeseries(path: str | Path, meta: dict | None = None) -> TimeSeries:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ChannelCountError(
                f"{path}: expected header {CSV_HEADER!r}, got {header!r}")
        cols = [[], [], [], [], []]
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 5:
                raise ChannelCountError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            for col, val in zip(cols, parts):
                col.append(float(val))
    if meta is None:
        meta = {}
        side = path.with_suffix(".meta")
        if side.exists():
            for line in side.read_text().splitlines():
                if "=" in line:
                    key, _, val = line.partition("=")
                    meta[key.strip()] = val.strip()
    return TimeSeries(*(np.array(c) for c in cols), meta=meta)
