"""Closed-loop vehicle model driven by high-level velocity/attitude commands.

The low-level flight controller is approximated by proportional-derivative
laws on vertical velocity, roll/pitch angles and yaw rate.  Two equivalent
wrench formulations are provided:

* a gain form built from explicit PD gains (``pd_wrench``), and
* a matrix form T = Rbar (S1 mu - S2 q - S3 q_dot - S4 q_ddot + S5)
  parameterized by a 16-entry vector xi (``pd_wrench_matrix``).

Eliminating the wrench against the rigid-body equations yields a
self-contained state-space model x_dot = f(x, mu, xi) used both as the
simulator inner loop and as identifiable model #1 (``pd_derivative``,
``PdModel``).

xi layout:
    xi1..xi4    command gains (vz, roll, pitch, yaw-rate rows of S1)
    xi5, xi6    proportional attitude gains (roll, pitch rows of S2)
    xi7..xi10   rate gains (vz, roll, pitch, yaw rows of S3)
    xi11, xi12  acceleration-feedback gains (z and yaw rows of S4)
    xi13        constant vertical force offset (z row of S5)
    xi14..xi16  principal inertias ix, iy, iz
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    InertiaParams,
    Wrench,
    coriolis_matrix,
    gravity_vector,
    inertia_matrix,
    rotation_matrix,
    state_vector,
)
from .errors import SingularMatrixError

# Command limits imposed by the vehicle SDK.
VZ_MAX = 5.0
TILT_MAX = 0.611
YAW_RATE_MAX = 5.0 * np.pi / 6.0

INPUT_LO = np.array([-VZ_MAX, -TILT_MAX, -TILT_MAX, -YAW_RATE_MAX])
INPUT_HI = -INPUT_LO

# Parameter vector identified on the stock test vehicle, used as the
# default plant/experiment profile throughout.
DEFAULT_XI = np.array(
    [
        0.6756, 1.0000, 0.6344, 1.0000,
        0.4080, 1.0000, 1.0000, 1.0000,
        0.2953, 0.5941, -0.8109, 1.0000,
        0.3984, 0.00546, 0.0035, 0.00659,
    ]
)

DEFAULT_GRAVITY = 9.81

# Generic bench mass used when no vehicle-specific value is configured.
DEFAULT_MASS = 2.355

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ControlInput:
    """High-level command [vz_d, phi_d, theta_d, psidot_d], bound-checked."""

    vz_d: float
    phi_d: float
    theta_d: float
    psidot_d: float

    def __post_init__(self):
        v = self.as_array()
        if not np.all(np.isfinite(v)):
            raise ValueError("control input must be finite")
        if np.any(v < INPUT_LO - 1e-12) or np.any(v > INPUT_HI + 1e-12):
            raise ValueError(
                f"control input {v} violates bounds lo={INPUT_LO}, hi={INPUT_HI}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.vz_d, self.phi_d, self.theta_d, self.psidot_d])

    @staticmethod
    def from_array(u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return ControlInput(float(u[0]), float(u[1]), float(u[2]), float(u[3]))


def input_vector(mu) -> np.ndarray:
    """Coerce ControlInput or array-like into a (..., 4) float array."""
    if isinstance(mu, ControlInput):
        return mu.as_array()
    u = np.asarray(mu, dtype=float)
    if u.shape[-1] != 4:
        raise ValueError(f"control input must have 4 trailing components, got {u.shape}")
    return u


def embed_input(mu) -> np.ndarray:
    """Embed the 4 commands into the 6-slot layout [0, 0, vz, phi, theta, dpsi]."""
    u = input_vector(mu)
    out = np.zeros(u.shape[:-1] + (6,))
    out[..., 2:6] = u
    return out


@dataclass(frozen=True)
class PdParams:
    """The 16-entry model parameter vector xi."""

    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape != (16,):
            raise ValueError(f"xi must have shape (16,), got {xi.shape}")
        if not np.all(np.isfinite(xi)):
            raise ValueError("xi must be finite")
        if np.any(xi[13:16] <= 0):
            raise ValueError("inertia entries xi14..xi16 must be positive")
        object.__setattr__(self, "xi", xi)

    @property
    def ix(self) -> float:
        return float(self.xi[13])

    @property
    def iy(self) -> float:
        return float(self.xi[14])

    @property
    def iz(self) -> float:
        return float(self.xi[15])

    def inertia_params(self, mass: float, g: float = DEFAULT_GRAVITY) -> InertiaParams:
        return InertiaParams(mass=mass, ix=self.ix, iy=self.iy, iz=self.iz, g=g)

    def to_json(self) -> str:
        return json.dumps({"xi": [float(v) for v in self.xi]})

    @staticmethod
    def from_json(text: str) -> "PdParams":
        data = json.loads(text)
        return PdParams(np.asarray(data["xi"], dtype=float))


@dataclass(frozen=True)
class SMatrices:
    """Diagonal parameter matrices of the wrench matrix form."""

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    s4: np.ndarray
    s5: np.ndarray


def build_s_matrices(params: PdParams) -> SMatrices:
    """Place xi into the S matrices.

    Slots: S1 = diag(0,0,xi1,xi2,xi3,xi4), S2 = diag(0,0,0,xi5,xi6,0),
    S3 = diag(0,0,xi7,xi8,xi9,xi10), S4 = diag(0,0,xi11,0,0,xi12),
    S5 = [0,0,xi13,0,0,0]; every other slot is structurally zero.
    """
    xi = params.xi
    s1 = np.diag([0.0, 0.0, xi[0], xi[1], xi[2], xi[3]])
    s2 = np.diag([0.0, 0.0, 0.0, xi[4], xi[5], 0.0])
    s3 = np.diag([0.0, 0.0, xi[6], xi[7], xi[8], xi[9]])
    s4 = np.diag([0.0, 0.0, xi[10], 0.0, 0.0, xi[11]])
    s5 = np.array([0.0, 0.0, xi[12], 0.0, 0.0, 0.0])
    return SMatrices(s1, s2, s3, s4, s5)


def extract_gain_entries(sm: SMatrices) -> np.ndarray:
    """Recover xi1..xi13 from the S matrices (inverse of the placement map)."""
    d1 = np.diag(sm.s1)
    d2 = np.diag(sm.s2)
    d3 = np.diag(sm.s3)
    d4 = np.diag(sm.s4)
    return np.array(
        [
            d1[2], d1[3], d1[4], d1[5],
            d2[3], d2[4],
            d3[2], d3[3], d3[4], d3[5],
            d4[2], d4[5],
            sm.s5[2],
        ]
    )


@dataclass(frozen=True)
class PdGains:
    """Explicit PD gains of the low-level loops."""

    kp_z: float
    kd_z: float
    kp_phi: float
    kd_phi: float
    kp_theta: float
    kd_theta: float
    kp_psi: float
    kd_psi: float


def gains_to_xi(gains: PdGains, mass: float, g: float, inertias) -> PdParams:
    """Map explicit PD gains onto the xi parameterization.

    The command and state gains of each channel coincide in the strict
    PD structure (xi1 = xi7 = kp_z etc.); identification later relaxes
    that tie.
    """
    ix, iy, iz = inertias
    xi = np.array(
        [
            gains.kp_z, gains.kp_phi, gains.kp_theta, gains.kp_psi,
            gains.kp_phi, gains.kp_theta,
            gains.kp_z, gains.kd_phi, gains.kd_theta, gains.kp_psi,
            gains.kd_z, gains.kd_psi,
            mass * g,
            ix, iy, iz,
        ]
    )
    return PdParams(xi)


def pd_wrench(state, mu, params: InertiaParams, gains: PdGains, accel=None) -> Wrench:
    """Wrench synthesized by the explicit PD laws.

    accel is the current generalized-acceleration estimate (6-vector);
    only its eta_ddot_z and psi_ddot entries feed the derivative terms.
    The command rates (vz_d derivative, desired yaw acceleration) are
    taken as zero.  Force = R [0, 0, fz_body] with gravity compensation
    inside the vertical loop.
    """
    x = state_vector(state)
    u = input_vector(mu)
    if accel is None:
        accel = np.zeros(6)
    accel = np.asarray(accel, dtype=float)

    fz_body = (
        gains.kp_z * (u[0] - x[8])
        + gains.kd_z * (0.0 - accel[2])
        + params.mass * params.g
    )
    rot = rotation_matrix(x[3:6])
    force = rot @ np.array([0.0, 0.0, fz_body])
    torque = np.array(
        [
            gains.kp_phi * (u[1] - x[3]) + gains.kd_phi * (0.0 - x[9]),
            gains.kp_theta * (u[2] - x[4]) + gains.kd_theta * (0.0 - x[10]),
            gains.kp_psi * (u[3] - x[11]) + gains.kd_psi * (0.0 - accel[5]),
        ]
    )
    return Wrench(force, torque)


def expanded_rotation(omega) -> np.ndarray:
    """6x6 block rotation blockdiag(R(Omega), I3).

    The identity lower-right block forwards the torque channels
    unchanged (a zero block would annihilate them and break the gain
    form equivalence).
    """
    a = np.asarray(omega, dtype=float) if not hasattr(omega, "as_array") else omega
    rot = rotation_matrix(a)
    out = np.zeros(rot.shape[:-2] + (6, 6))
    out[..., 0:3, 0:3] = rot
    out[..., 3, 3] = 1.0
    out[..., 4, 4] = 1.0
    out[..., 5, 5] = 1.0
    return out


def pd_wrench_matrix(state, mu, params: PdParams, accel=None) -> Wrench:
    """Wrench via the matrix form Rbar (S1 mu - S2 q - S3 q_dot - S4 q_ddot + S5)."""
    x = state_vector(state)
    u6 = embed_input(mu)
    if accel is None:
        accel = np.zeros(6)
    accel = np.asarray(accel, dtype=float)
    sm = build_s_matrices(params)
    q = x[0:6]
    qd = x[6:12]
    inner = sm.s1 @ u6 - sm.s2 @ q - sm.s3 @ qd - sm.s4 @ accel + sm.s5
    t = expanded_rotation(x[3:6]) @ inner
    return Wrench(t[0:3], t[3:6])


def _accel_batch(x: np.ndarray, u: np.ndarray, xi: np.ndarray, mass: float, g: float):
    """Vectorized closed-loop generalized acceleration, (..., 12),(...,4) -> (..., 6).

    Solves (Mbar + Rbar S4) q_ddot = Rbar (S1 mu - S2 q - S3 q_dot + S5)
    - Cbar q_dot - G.  The coupling matrix is block diagonal: the
    translational block m I3 + xi11 * R[:, 2] e3^T and the rotational
    block M(Omega) + diag(0, 0, xi12).
    """
    ang = x[..., 3:6]
    rot = rotation_matrix(ang)
    rcol = rot[..., :, 2]

    s_z = xi[0] * u[..., 0] - xi[6] * x[..., 8] + xi[12]
    rhs_top = rcol * s_z[..., None]
    rhs_top = rhs_top - np.array([0.0, 0.0, mass * g])

    a_top = np.zeros(x.shape[:-1] + (3, 3))
    a_top[..., 0, 0] = mass
    a_top[..., 1, 1] = mass
    a_top[..., 2, 2] = mass
    a_top += xi[10] * rcol[..., :, None] * np.array([0.0, 0.0, 1.0])

    inert = InertiaParams(mass=mass, ix=xi[13], iy=xi[14], iz=xi[15], g=g)
    m_rot = inertia_matrix(ang, inert)
    a_bot = m_rot.copy()
    a_bot[..., 2, 2] += xi[11]

    cor = coriolis_matrix(ang, x[..., 9:12], inert)
    cqd = np.einsum("...ij,...j->...i", cor, x[..., 9:12])
    rhs_bot = np.stack(
        [
            xi[1] * u[..., 1] - xi[4] * x[..., 3] - xi[7] * x[..., 9],
            xi[2] * u[..., 2] - xi[5] * x[..., 4] - xi[8] * x[..., 10],
            xi[3] * u[..., 3] - xi[9] * x[..., 11],
        ],
        axis=-1,
    )
    rhs_bot = rhs_bot - cqd

    eta_dd = np.linalg.solve(a_top, rhs_top[..., None])[..., 0]
    om_dd = np.linalg.solve(a_bot, rhs_bot[..., None])[..., 0]
    return np.concatenate([eta_dd, om_dd], axis=-1)


def pd_closed_loop_accel(state, mu, params: PdParams, mass: float,
                         g: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Generalized acceleration of the closed-loop model (exact implicit form).

    Inertias come from xi14..xi16; mass and gravity are configuration
    constants.  Raises SingularMatrixError with a condition report when
    the coupling matrix (Mbar + Rbar S4) is numerically singular.
    """
    x = state_vector(state)
    u = input_vector(mu)
    xi = params.xi

    ang = x[..., 3:6]
    rot = rotation_matrix(ang)
    coupling = np.zeros(x.shape[:-1] + (6, 6))
    coupling[..., 0, 0] = mass
    coupling[..., 1, 1] = mass
    coupling[..., 2, 2] = mass
    coupling[..., 0:3, 2] += xi[10] * rot[..., :, 2]
    inert = InertiaParams(mass=mass, ix=xi[13], iy=xi[14], iz=xi[15], g=g)
    coupling[..., 3:6, 3:6] = inertia_matrix(ang, inert)
    coupling[..., 5, 5] += xi[11]
    cond = np.linalg.cond(coupling)
    if np.any(cond > _COND_LIMIT):
        raise SingularMatrixError(
            f"closed-loop coupling matrix condition {np.max(cond):.3e} exceeds {_COND_LIMIT:.0e}"
        )
    return _accel_batch(x, u, xi, mass, g)


def pd_derivative(state, mu, params: PdParams, mass: float,
                  g: float = DEFAULT_GRAVITY) -> np.ndarray:
    """State derivative x_dot = [q_dot, pd_closed_loop_accel(x, mu, xi)]."""
    x = state_vector(state)
    acc = pd_closed_loop_accel(x, mu, params, mass, g)
    return np.concatenate([x[..., 6:12], acc], axis=-1)


class PdModel:
    """Callable closed-loop model bound to (xi, mass, g).

    ``derivative`` is a scalar fast path used in integration loops;
    ``derivative_batch`` is the vectorized reference path.  Both
    evaluate the same equations and are cross-checked in the tests.
    """

    def __init__(self, params: PdParams, mass: float, g: float = DEFAULT_GRAVITY):
        self.params = params
        self.mass = float(mass)
        self.g = float(g)
        self._xi = tuple(float(v) for v in params.xi)

    def derivative(self, x, u) -> np.ndarray:
        xi = self._xi
        m = self.mass
        phi, theta = float(x[3]), float(x[4])
        psi = float(x[5])
        dphi, dtheta, dpsi = float(x[9]), float(x[10]), float(x[11])
        cf, sf = math.cos(phi), math.sin(phi)
        ct, st = math.cos(theta), math.sin(theta)
        cp, sp = math.cos(psi), math.sin(psi)

        r13 = cp * st * cf + sp * sf
        r23 = sp * st * cf - cp * sf
        r33 = ct * cf

        s_z = xi[0] * float(u[0]) - xi[6] * float(x[8]) + xi[12]
        bz = s_z * r33 - m * self.g
        pivot = m + xi[10] * r33
        if abs(pivot) < 1e-12 * (m + abs(xi[10])):
            raise SingularMatrixError("translational coupling block is singular")
        az = bz / pivot
        ax = (s_z * r13 - xi[10] * r13 * az) / m
        ay = (s_z * r23 - xi[10] * r23 * az) / m

        ix, iy, iz = xi[13], xi[14], xi[15]
        m11 = ix
        m13 = -ix * st
        m22 = iz + (iy - iz) * cf * cf
        m23 = cf * sf * ct * (iy - iz)
        m33 = iz * cf * cf * ct * ct + iy * sf * sf * ct * ct + ix * st * st + xi[11]

        c12 = (
            (iy - iz) * (dtheta * cf * sf + dpsi * sf * sf * ct)
            + (iz - iy) * (dpsi * cf * cf * ct)
            - ix * dpsi * ct
        )
        c13 = (iz - iy) * dpsi * cf * sf * ct * ct
        c21 = (
            (iz - iy) * (dtheta * cf * sf + dpsi * sf * ct)
            + (iy - iz) * (dpsi * cf * cf * ct)
            + ix * dpsi * ct
        )
        c22 = (iz - iy) * dphi * cf * sf
        c23 = (
            -ix * dpsi * st * ct
            + iy * dpsi * sf * sf * st * ct
            + iz * dpsi * cf * cf * st * ct
        )
        c31 = (iy - iz) * dpsi * ct * ct * sf * cf - ix * dtheta * ct
        c32 = (
            (iz - iy) * (dtheta * cf * sf * st + dphi * sf * sf * ct)
            + (iy - iz) * dphi * cf * cf * ct
            + ix * dpsi * st * ct
        )
        c33 = (
            (iy - iz) * dphi * cf * sf * ct * ct
            - iy * dtheta * sf * sf * ct * st
            - iz * dtheta * cf * cf * ct * st
            + ix * dtheta * ct * st
        )

        b1 = xi[1] * float(u[1]) - xi[4] * phi - xi[7] * dphi
        b1 -= c12 * dtheta + c13 * dpsi
        b2 = xi[2] * float(u[2]) - xi[5] * theta - xi[8] * dtheta
        b2 -= c21 * dphi + c22 * dtheta + c23 * dpsi
        b3 = xi[3] * float(u[3]) - xi[9] * dpsi
        b3 -= c31 * dphi + c32 * dtheta + c33 * dpsi

        det = (
            m11 * (m22 * m33 - m23 * m23)
            - 0.0
            + m13 * (0.0 - m22 * m13)
        )
        if abs(det) < 1e-30:
            raise SingularMatrixError("rotational coupling block is singular")
        # adjugate solve for the symmetric matrix [[m11,0,m13],[0,m22,m23],[m13,m23,m33]]
        a11 = m22 * m33 - m23 * m23
        a12 = m13 * m23
        a13 = -m22 * m13
        a22 = m11 * m33 - m13 * m13
        a23 = -m11 * m23
        a33 = m11 * m22
        al1 = (a11 * b1 + a12 * b2 + a13 * b3) / det
        al2 = (a12 * b1 + a22 * b2 + a23 * b3) / det
        al3 = (a13 * b1 + a23 * b2 + a33 * b3) / det

        return np.array(
            [
                x[6], x[7], x[8], dphi, dtheta, dpsi,
                ax, ay, az, al1, al2, al3,
            ],
            dtype=float,
        )

    def derivative_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        acc = _accel_batch(x, u, np.asarray(self.params.xi), self.mass, self.g)
        return np.concatenate([x[..., 6:12], acc], axis=-1)

    def to_dict(self) -> dict:
        return {"xi": [float(v) for v in self.params.xi]}

    @staticmethod
    def from_dict(data: dict, mass: float, g: float = DEFAULT_GRAVITY) -> "PdModel":
        return PdModel(PdParams(np.asarray(data["xi"], dtype=float)), mass, g)
