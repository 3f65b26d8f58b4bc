"""RCAM six-degree-of-freedom rigid-body aircraft model.

State ordering (13): position NED (m), body airspeed (m/s), Euler angles ZYX
(rad), body rates (rad/s), throttle (rad-equivalent).
Input ordering (4): aileron, elevator, rudder, thrust command (rad).

All functions broadcast over leading dimensions and accept complex arrays, so
the Jacobians are obtained by complex-step differentiation of the same code
path that produces the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NX = 13
NU = 4

# state slices
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
RATE = slice(9, 12)
THR = 12

DEG = np.pi / 180.0
U_FLOOR = 1.0
PITCH_MARGIN = 1e-3
_CSTEP = 1e-30


class ModelError(ValueError):
    """Raised when the model is evaluated outside its domain."""


class DegenerateAirspeedError(ModelError):
    pass


class PitchSingularityError(ModelError):
    pass


@dataclass(frozen=True)
class AircraftParams:
    """Physical and aerodynamic constants (RCAM defaults)."""

    mass: float = 120000.0
    g: float = 9.81
    inertia_ratios: tuple[float, float, float, float] = (40.07, 64.0, 99.92, 2.0923)
    rho: float = 1.225
    cl_alpha: float = 5.5
    cl_alpha_tail: float = 3.1
    cl_qv: float = 1.3
    alpha0: float = -11.5 * DEG
    downwash_slope: float = 0.25
    tail_area: float = 64.0
    wing_area: float = 260.0
    cd0: float = 0.13
    cd1: float = 0.654
    cd2: float = 0.07
    cd_alpha: float = 5.5
    cy_beta: float = -1.6
    cy_dr: float = 0.24
    chord: float = 6.6
    tail_arm: float = 24.8
    cl_beta: float = -1.4
    cl_p: float = -11.0
    cl_r: float = 5.0
    cl_da: float = -0.6
    cl_dr: float = 0.22
    cm0: float = -0.59
    cm_alpha: float = -3.1
    cm_q: float = -4.03
    cm_de: float = -3.1
    cn_beta: float = 1.0
    cn_alphabeta: float = -3.82
    cn_p: float = 1.7
    cn_r: float = -11.5
    cn_da: float = 0.0
    cn_dr: float = -0.63
    p_cg: tuple[float, float, float] = (0.23 * 6.6, 0.0, 0.1 * 6.6)
    p_ac: tuple[float, float, float] = (0.12 * 6.6, 0.0, 0.0)
    p_t: tuple[float, float, float] = (0.0, 0.0, -1.9)
    tau_t: float = 1.5
    _jinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("mass", "rho", "tau_t", "wing_area", "tail_area", "chord"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        J = self.inertia
        if np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia matrix is not positive definite")
        object.__setattr__(self, "_jinv", np.linalg.inv(J))

    @property
    def inertia(self) -> np.ndarray:
        jx, jy, jz, jxz = self.inertia_ratios
        return self.mass * np.array([[jx, 0.0, -jxz], [0.0, jy, 0.0], [-jxz, 0.0, jz]])

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._jinv


def _check_pitch(theta, margin=PITCH_MARGIN):
    if np.any(np.abs(np.real(theta)) >= np.pi / 2 - margin):
        raise PitchSingularityError("pitch angle too close to +-90 deg")


def _check_airspeed(u, floor=U_FLOOR):
    if np.any(np.real(u) <= floor):
        raise DegenerateAirspeedError(f"body-axis airspeed u below floor {floor} m/s")


def rotation_i2b(att) -> np.ndarray:
    """Rotation matrix mapping inertial (NED) coordinates into the body frame.

    ``att`` is ``(..., 3)`` roll/pitch/yaw; returns ``(..., 3, 3)``. The
    transpose maps body coordinates back to the inertial frame.
    """
    att = np.asarray(att)
    phi, th, psi = att[..., 0], att[..., 1], att[..., 2]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(th), np.sin(th)
    cp, sp = np.cos(psi), np.sin(psi)
    R = np.stack(
        [
            np.stack([ct * cp, ct * sp, -st], axis=-1),
            np.stack([sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct], axis=-1),
            np.stack([cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct], axis=-1),
        ],
        axis=-2,
    )
    return R


def euler_rate_map(att, margin: float = PITCH_MARGIN) -> np.ndarray:
    """Matrix taking body rates to Euler-angle rates."""
    att = np.asarray(att)
    phi, th = att[..., 0], att[..., 1]
    _check_pitch(th, margin)
    cf, sf = np.cos(phi), np.sin(phi)
    tt, sec = np.tan(th), 1.0 / np.cos(th)
    one, zero = np.ones_like(phi), np.zeros_like(phi)
    return np.stack(
        [
            np.stack([one, sf * tt, cf * tt], axis=-1),
            np.stack([zero, cf, -sf], axis=-1),
            np.stack([zero, sf * sec, cf * sec], axis=-1),
        ],
        axis=-2,
    )


def aero_angles(vel, floor: float = U_FLOOR):
    """Angle of attack, sideslip and airspeed magnitude from body airspeed."""
    vel = np.asarray(vel)
    u, v, w = vel[..., 0], vel[..., 1], vel[..., 2]
    _check_airspeed(u, floor)
    V = np.sqrt(u * u + v * v + w * w)
    return np.arctan(w / u), np.arcsin(v / V), V


def aero_coefficients(x, u, params: AircraftParams = AircraftParams()):
    """Return ``(CL, CD, CY, Cl, Cm, Cn)`` at the given state and input."""
    P = params
    x = np.asarray(x)
    u = np.asarray(u)
    alpha, beta, V = aero_angles(x[..., VEL])
    p, q, r = x[..., 9], x[..., 10], x[..., 11]
    da, de, dr = u[..., 0], u[..., 1], u[..., 2]

    eps = P.downwash_slope * (alpha - P.alpha0)
    alpha_t = alpha - eps + de + P.cl_qv * q * P.tail_arm / V
    CL = P.cl_alpha * (alpha - P.alpha0) + P.cl_alpha_tail * (P.tail_area / P.wing_area) * alpha_t
    CD = P.cd0 + P.cd2 * (P.cd_alpha * alpha + P.cd1) ** 2
    CY = P.cy_beta * beta + P.cy_dr * dr

    c = P.chord
    tail_vol = P.tail_area * P.tail_arm / (P.wing_area * c)
    Cl = P.cl_beta * beta + P.cl_p * p * c / V + P.cl_r * r * c / V + P.cl_da * da + P.cl_dr * dr
    Cm = (
        P.cm0
        + P.cm_alpha * tail_vol * (alpha - eps)
        + P.cm_q * tail_vol * P.tail_arm * q / V
        + P.cm_de * tail_vol * de
    )
    Cn = (
        P.cn_beta * beta
        + P.cn_alphabeta * alpha * beta
        + P.cn_p * c * p / V
        + P.cn_r * c * r / V
        + P.cn_da * da
        + P.cn_dr * dr
    )
    return CL, CD, CY, Cl, Cm, Cn


def _cross(a, b):
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def forces_and_moments(x, u, params: AircraftParams = AircraftParams()):
    """Body-frame forces and moments ``(F_a, F_g, F_e, M_a, M_e)`` in N and N m."""
    P = params
    x = np.asarray(x)
    u = np.asarray(u)
    alpha, beta, V = aero_angles(x[..., VEL])
    CL, CD, CY, Cl, Cm, Cn = aero_coefficients(x, u, P)
    qbar_s = 0.5 * P.rho * V * V * P.wing_area
    L, D, Y = qbar_s * CL, qbar_s * CD, qbar_s * CY
    ca, sa, cb, sb = np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)
    F_a = np.stack(
        [
            L * sa - D * ca * cb - Y * ca * sb,
            -D * sb + Y * cb,
            -L * ca - D * sa * cb - Y * sa * sb,
        ],
        axis=-1,
    )
    M_ac = qbar_s[..., None] * P.chord * np.stack([Cl, Cm, Cn], axis=-1)
    M_a = M_ac + _cross(F_a, np.asarray(P.p_cg) - np.asarray(P.p_ac))

    att = x[..., ATT]
    phi, th = att[..., 0], att[..., 1]
    mg = P.mass * P.g
    F_g = mg * np.stack([-np.sin(th), np.sin(phi) * np.cos(th), np.cos(phi) * np.cos(th)], axis=-1)

    dt = x[..., THR]
    zero = np.zeros_like(dt)
    F_e = np.stack([2.0 * dt * mg, zero, zero], axis=-1)
    M_e = _cross(np.asarray(P.p_cg) - np.asarray(P.p_t), F_e)
    return F_a, F_g, F_e, M_a, M_e


def dynamics_rhs(x, u, wind=(0.0, 0.0, 0.0), params: AircraftParams = AircraftParams()):
    """Time derivative of the 13-state model; broadcasts over leading axes."""
    P = params
    x = np.asarray(x)
    u = np.asarray(u)
    wind = np.asarray(wind, dtype=float)
    vel, att, om = x[..., VEL], x[..., ATT], x[..., RATE]

    R = rotation_i2b(att)
    pdot = np.einsum("...ji,...j->...i", R, vel) + wind
    F_a, F_g, F_e, M_a, M_e = forces_and_moments(x, u, P)
    vdot = (F_a + F_g + F_e) / P.mass - _cross(om, vel)
    J = P.inertia
    Jom = om @ J.T
    omdot = (M_a + M_e - _cross(om, Jom)) @ P.inertia_inv.T
    attdot = np.einsum("...ij,...j->...i", euler_rate_map(att), om)
    thrdot = (u[..., 3] - x[..., THR]) / P.tau_t
    return np.concatenate([pdot, vdot, attdot, omdot, thrdot[..., None]], axis=-1)


def dynamics_jacobians(x, u, wind=(0.0, 0.0, 0.0), params: AircraftParams = AircraftParams()):
    """Jacobians ``(df/dx, df/du)`` with shapes ``(..., 13, 13)`` and ``(..., 13, 4)``.

    Complex-step differentiation: exact to round-off, no step-size tuning.
    """
    f, A, B = rhs_and_jacobians(x, u, wind, params)
    return A, B


def rhs_and_jacobians(x, u, wind=(0.0, 0.0, 0.0), params: AircraftParams = AircraftParams()):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lead = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    x = np.broadcast_to(x, lead + (NX,))
    u = np.broadcast_to(u, lead + (NU,))
    n = NX + NU
    # perturbation directions stacked on a new axis: (..., 1 + n, dim)
    xs = np.repeat(x[..., None, :], n + 1, axis=-2).astype(complex)
    us = np.repeat(u[..., None, :], n + 1, axis=-2).astype(complex)
    idx = np.arange(NX)
    xs[..., 1 + idx, idx] += 1j * _CSTEP
    idu = np.arange(NU)
    us[..., 1 + NX + idu, idu] += 1j * _CSTEP
    F = dynamics_rhs(xs, us, wind, params)
    f = F[..., 0, :].real
    jac = np.swapaxes(F[..., 1:, :].imag / _CSTEP, -1, -2)
    return f, jac[..., :NX], jac[..., NX:]


def pitch_trim_elevator(x, u, wind=(0.0, 0.0, 0.0), params: AircraftParams = AircraftParams()) -> float:
    """Elevator deflection that zeroes the pitch acceleration at ``(x, u)``.

    The pitch acceleration is affine in the elevator, so two evaluations suffice.
    """
    u0 = np.array(u, dtype=float)
    u1 = u0.copy()
    u0[1], u1[1] = 0.0, 1.0
    q0 = dynamics_rhs(x, u0, wind, params)[10]
    q1 = dynamics_rhs(x, u1, wind, params)[10]
    return float(-q0 / (q1 - q0))
