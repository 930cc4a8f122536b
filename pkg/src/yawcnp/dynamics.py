"""Continuous dynamics of three single-track vehicle models.

Three models of increasing fidelity share one state and control layout:

* KST - kinematic single track: the yaw rate follows directly from steering
  geometry, ``psi_dot = v / l_wb * tan(delta)``.
* DST - dynamic single track: yaw acceleration from linear axle forces with
  friction- and load-dependent cornering stiffness.
* STD - single-track drift model: nonlinear combined-slip tire forces and
  wheel spin dynamics.

All derivative functions are pure: identical inputs give bit-identical
outputs, and nothing is mutated.  DST is singular below 0.1 m/s and is
switched to KST there; STD output is blended linearly against KST over the
window [0.1, 1.0] m/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRegimeError, SingularVelocityError
from .params import PacejkaCoeffs, VehicleParams

# speed thresholds shared by the models [m/s]
V_MIN_DST = 0.1          # below this, DST falls back to KST
V_BLEND_LOW = 0.1        # STD blend window lower edge
V_BLEND_HIGH = 1.0       # STD blend window upper edge
EPS_V = 1e-3             # singular-velocity guard for slip computations

SLIP_CLAMP = 1.5         # longitudinal slip magnitude limit
STEER_RATE_MAX = 0.4     # steering actuator rate limit [rad/s]
STEER_TAU = 0.05         # steering tracking time constant [s]

# state vector layout shared by all models
IX_X, IX_Y, IX_PSI, IX_PSIDOT, IX_V, IX_BETA, IX_DELTA, IX_WF, IX_WR = range(9)
STATE_SIZE = 9


@dataclass(frozen=True)
class VehicleState:
    """Continuous vehicle state; some fields are unused by the simpler models."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    psi_dot: float = 0.0
    v: float = 0.0
    beta: float = 0.0
    delta: float = 0.0
    omega_f: float = 0.0
    omega_r: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.psi, self.psi_dot, self.v,
                self.beta, self.delta, self.omega_f, self.omega_r)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @classmethod
    def from_array(cls, a) -> "VehicleState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class StateDerivative:
    """Per-field time derivatives of :class:`VehicleState`."""

    x_dot: float = 0.0
    y_dot: float = 0.0
    psi_dot: float = 0.0
    psi_ddot: float = 0.0
    v_dot: float = 0.0
    beta_dot: float = 0.0
    delta_dot: float = 0.0
    omega_f_dot: float = 0.0
    omega_r_dot: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.x_dot, self.y_dot, self.psi_dot, self.psi_ddot,
                self.v_dot, self.beta_dot, self.delta_dot,
                self.omega_f_dot, self.omega_r_dot)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @classmethod
    def from_array(cls, a) -> "StateDerivative":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class ControlInput:
    """Commanded steering angle [rad] and longitudinal acceleration [m/s^2]."""

    delta_cmd: float = 0.0
    a_long: float = 0.0

    def __post_init__(self):
        if not (abs(self.delta_cmd) <= math.pi / 2 and math.isfinite(self.delta_cmd)
                and math.isfinite(self.a_long)):
            raise InvalidRegimeError("control input out of range")

    def drive_torque(self, p: VehicleParams) -> float:
        """Equivalent wheel torque for the commanded acceleration, T = m a R_w."""
        return p.m * self.a_long * p.R_w


@dataclass(frozen=True)
class TireForces:
    """Per-axle tire forces and the slip quantities they were computed from."""

    F_xf: float
    F_xr: float
    F_yf: float
    F_yr: float
    F_zf: float
    F_zr: float
    alpha_f: float
    alpha_r: float
    s_f: float
    s_r: float
    u_wf: float
    u_wr: float


# ---------------------------------------------------------------------------
# elementary relations


def kst_yaw_rate(v: float, delta: float, l_wb: float) -> float:
    """Kinematic yaw rate v / l_wb * tan(delta)."""
    return v / l_wb * math.tan(delta)


def vertical_forces(p: VehicleParams, a_long: float) -> tuple[float, float]:
    """Axle vertical loads including longitudinal load transfer.

    Raises :class:`InvalidRegimeError` when either axle unloads completely
    (the planar models are invalid once a wheel lifts).
    """
    l_sum = p.l_r + p.l_f
    F_zf = p.m * (p.g * p.l_r - a_long * p.h_cg) / l_sum
    F_zr = p.m * (p.g * p.l_f + a_long * p.h_cg) / l_sum
    if F_zf <= 0.0 or F_zr <= 0.0:
        raise InvalidRegimeError(
            f"axle lift at a_long={a_long:.3f}: F_zf={F_zf:.1f} N, F_zr={F_zr:.1f} N")
    return F_zf, F_zr


def cornering_stiffness(mu: float, C_S: float, F_z: float) -> float:
    """Friction- and load-dependent cornering stiffness mu * C_S * F_z [N/rad]."""
    return mu * C_S * F_z


def slip_angles(v: float, beta: float, psi_dot: float, delta: float,
                p: VehicleParams) -> tuple[float, float]:
    """Lateral slip angles of front and rear tires."""
    vx = v * math.cos(beta)
    if vx <= EPS_V:
        raise SingularVelocityError(f"v*cos(beta)={vx:.4g} m/s below {EPS_V}")
    vy = v * math.sin(beta)
    alpha_f = math.atan((vy + psi_dot * p.l_f) / vx) - delta
    alpha_r = math.atan((vy - psi_dot * p.l_r) / vx)
    return alpha_f, alpha_r


def longitudinal_slip(omega: float, u_w: float, R_w: float) -> float:
    """Longitudinal slip ratio 1 - R_w*omega/u_w, clamped to [-1.5, 1.5]."""
    if u_w <= EPS_V:
        raise SingularVelocityError(f"contact velocity {u_w:.4g} m/s below {EPS_V}")
    s = 1.0 - R_w * omega / u_w
    return min(max(s, -SLIP_CLAMP), SLIP_CLAMP)


def tire_contact_velocities(v: float, beta: float, psi_dot: float, delta: float,
                            p: VehicleParams) -> tuple[float, float]:
    """Velocities of the tire contact patches along each wheel's heading."""
    cb = math.cos(beta)
    u_wf = v * cb * math.cos(delta) + (v * math.sin(beta) + p.l_f * psi_dot) * math.sin(delta)
    u_wr = v * cb
    return u_wf, u_wr


def _magic(k: float, B: float, C: float, E: float, D: float) -> float:
    bk = B * k
    return D * math.sin(C * math.atan(bk - E * (bk - math.atan(bk))))


def pacejka_combined(s: float, alpha: float, F_z: float, mu: float,
                     coeffs: PacejkaCoeffs) -> tuple[float, float]:
    """Combined-slip tire forces from the magic formula.

    Pure-slip curves are evaluated per channel; the pair is then shrunk onto
    the friction ellipse so that sqrt(Fx^2 + Fy^2) <= mu * F_z.  The
    longitudinal channel is driven by -s so that a spinning wheel
    (R_w*omega > u_w, s < 0) produces a propulsive force.
    """
    D = mu * F_z
    F_x = _magic(-s, coeffs.b_long, coeffs.c_long, coeffs.e_long, D)
    F_y = _magic(-math.tan(alpha), coeffs.b_lat, coeffs.c_lat, coeffs.e_lat, D)
    norm = math.hypot(F_x, F_y)
    if norm > D > 0.0:
        scale = D / norm
        F_x *= scale
        F_y *= scale
    return F_x, F_y


def _steer_rate(delta: float, delta_cmd: float) -> float:
    rate = (delta_cmd - delta) / STEER_TAU
    return min(max(rate, -STEER_RATE_MAX), STEER_RATE_MAX)


# ---------------------------------------------------------------------------
# tuple-based derivative kernels (hot path used by the simulator; plain float
# math is several times faster here than per-element ndarray access)

StateTuple = tuple  # 9 floats in the layout above


def _kst_deriv_t(s: StateTuple, u: ControlInput, p: VehicleParams) -> StateTuple:
    psi, v, delta = s[IX_PSI], s[IX_V], s[IX_DELTA]
    v_dot = u.a_long
    delta_dot = _steer_rate(delta, u.delta_cmd)
    tan_d = math.tan(delta)
    psi_dot = v / p.l_wb * tan_d
    # analytic d/dt of the kinematic yaw rate under the returned v_dot, delta_dot
    psi_ddot = v_dot / p.l_wb * tan_d + v / p.l_wb * delta_dot / math.cos(delta) ** 2
    # wheel speeds follow free rolling so that blending into the drift model
    # stays continuous
    w_dot = v_dot / p.R_w
    return (v * math.cos(psi), v * math.sin(psi), psi_dot, psi_ddot,
            v_dot, 0.0, delta_dot, w_dot, w_dot)


def _dst_deriv_t(s: StateTuple, u: ControlInput, p: VehicleParams) -> StateTuple:
    v = s[IX_V]
    if v < V_MIN_DST:
        raise SingularVelocityError(f"dynamic model invalid at v={v:.4g} m/s")
    psi, psi_dot, beta, delta = s[IX_PSI], s[IX_PSIDOT], s[IX_BETA], s[IX_DELTA]
    F_zf, F_zr = vertical_forces(p, u.a_long)
    C_f = cornering_stiffness(p.mu, p.C_Sf, F_zf)
    C_r = cornering_stiffness(p.mu, p.C_Sr, F_zr)
    # linear axle forces whose yaw moment reproduces the closed-form yaw dynamics
    F_f = C_f * (delta - beta - p.l_f * psi_dot / v)
    F_r = C_r * (-beta + p.l_r * psi_dot / v)
    psi_ddot = (p.l_f * C_f * delta
                + (p.l_r * C_r - p.l_f * C_f) * beta
                - (p.l_f ** 2 * C_f + p.l_r ** 2 * C_r) * psi_dot / v) / p.I_z
    beta_dot = (F_f + F_r) / (p.m * v) - psi_dot
    v_dot = u.a_long
    w_dot = v_dot / p.R_w
    return (v * math.cos(psi + beta), v * math.sin(psi + beta), psi_dot, psi_ddot,
            v_dot, beta_dot, _steer_rate(delta, u.delta_cmd), w_dot, w_dot)


def _tire_forces(s: StateTuple, u: ControlInput, p: VehicleParams) -> TireForces:
    v, beta, psi_dot, delta = s[IX_V], s[IX_BETA], s[IX_PSIDOT], s[IX_DELTA]
    F_zf, F_zr = vertical_forces(p, u.a_long)
    alpha_f, alpha_r = slip_angles(v, beta, psi_dot, delta, p)
    u_wf, u_wr = tire_contact_velocities(v, beta, psi_dot, delta, p)
    s_f = longitudinal_slip(s[IX_WF], u_wf, p.R_w)
    s_r = longitudinal_slip(s[IX_WR], u_wr, p.R_w)
    F_xf, F_yf = pacejka_combined(s_f, alpha_f, F_zf, p.mu, p.pacejka)
    F_xr, F_yr = pacejka_combined(s_r, alpha_r, F_zr, p.mu, p.pacejka)
    return TireForces(F_xf, F_xr, F_yf, F_yr, F_zf, F_zr,
                      alpha_f, alpha_r, s_f, s_r, u_wf, u_wr)


def drift_yaw_acceleration(F_yf: float, F_yr: float, F_xf: float, delta: float,
                           p: VehicleParams) -> float:
    """Yaw acceleration from axle tire forces in the drift model."""
    return (F_yf * math.cos(delta) * p.l_f - F_yr * p.l_r
            + F_xf * math.sin(delta) * p.l_f) / p.I_z


def _std_deriv_t(s: StateTuple, u: ControlInput, p: VehicleParams) -> StateTuple:
    v = s[IX_V]
    if v < EPS_V:
        raise SingularVelocityError(f"drift model invalid at v={v:.4g} m/s")
    psi, psi_dot, beta, delta = s[IX_PSI], s[IX_PSIDOT], s[IX_BETA], s[IX_DELTA]
    f = _tire_forces(s, u, p)
    psi_ddot = drift_yaw_acceleration(f.F_yf, f.F_yr, f.F_xf, delta, p)
    # planar force balance along and across the velocity direction
    cdb = math.cos(delta - beta)
    sdb = math.sin(delta - beta)
    cb = math.cos(beta)
    sb = math.sin(beta)
    v_dot = (f.F_xf * cdb - f.F_yf * sdb + f.F_xr * cb + f.F_yr * sb) / p.m
    beta_dot = (f.F_xf * sdb + f.F_yf * cdb
                - f.F_xr * sb + f.F_yr * cb) / (p.m * v) - psi_dot
    torque = u.drive_torque(p)
    T_f = p.torque_split * torque
    T_r = (1.0 - p.torque_split) * torque
    return (v * math.cos(psi + beta), v * math.sin(psi + beta), psi_dot, psi_ddot,
            v_dot, beta_dot, _steer_rate(delta, u.delta_cmd),
            (T_f - p.R_w * f.F_xf) / p.I_w, (T_r - p.R_w * f.F_xr) / p.I_w)


def _blend_weight(v: float) -> float:
    w = (v - V_BLEND_LOW) / (V_BLEND_HIGH - V_BLEND_LOW)
    return min(max(w, 0.0), 1.0)


def _blend_t(v: float, kst_out: StateTuple, full_out: StateTuple) -> StateTuple:
    w = _blend_weight(v)
    if w == 0.0:
        return kst_out
    if w == 1.0:
        return full_out
    wk = 1.0 - w
    return tuple(w * a + wk * b for a, b in zip(full_out, kst_out))


def _model_deriv_t(kind: str, s: StateTuple, u: ControlInput,
                   p: VehicleParams) -> StateTuple:
    v = s[IX_V]
    if kind == "kst":
        return _kst_deriv_t(s, u, p)
    if kind == "dst":
        if v < V_MIN_DST:
            return _kst_deriv_t(s, u, p)
        return _dst_deriv_t(s, u, p)
    if kind == "std":
        kst_out = _kst_deriv_t(s, u, p)
        if v <= V_BLEND_LOW:
            return kst_out
        return _blend_t(v, kst_out, _std_deriv_t(s, u, p))
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# public dataclass-level API


def kst_derivative(state: VehicleState, u: ControlInput, p: VehicleParams) -> StateDerivative:
    """Kinematic single-track dynamics."""
    return StateDerivative(*_kst_deriv_t(state.as_tuple(), u, p))


def dst_derivative(state: VehicleState, u: ControlInput, p: VehicleParams) -> StateDerivative:
    """Dynamic single-track dynamics; singular below 0.1 m/s."""
    return StateDerivative(*_dst_deriv_t(state.as_tuple(), u, p))


def std_derivative(state: VehicleState, u: ControlInput, p: VehicleParams) -> StateDerivative:
    """Single-track drift dynamics with combined-slip tire forces."""
    return StateDerivative(*_std_deriv_t(state.as_tuple(), u, p))


def tire_forces(state: VehicleState, u: ControlInput, p: VehicleParams) -> TireForces:
    """Tire forces and slip quantities entering the drift model."""
    return _tire_forces(state.as_tuple(), u, p)


def low_speed_blend(v: float, kst_out: StateDerivative,
                    full_out: StateDerivative) -> StateDerivative:
    """Linear blend of a full-model derivative against the kinematic fallback.

    The weight ramps from 0 at 0.1 m/s to 1 at 1.0 m/s, so the kinematic
    output is returned exactly at or below the switch speed.
    """
    return StateDerivative(*_blend_t(v, kst_out.as_tuple(), full_out.as_tuple()))


def model_derivative(kind: str, state: VehicleState, u: ControlInput,
                     p: VehicleParams) -> StateDerivative:
    """Derivative of the chosen model with its low-speed handling applied."""
    return StateDerivative(*_model_deriv_t(kind, state.as_tuple(), u, p))
