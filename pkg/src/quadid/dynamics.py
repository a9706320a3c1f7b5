"""Rigid-body dynamics of a quadrotor in generalized coordinates.

The vehicle is described by generalized coordinates q = [eta, Omega]:
inertial position eta (m) and ZYX Euler angles Omega = (phi, theta, psi)
(rad).  The full state stacks coordinates and rates,

    x = [eta, Omega, eta_dot, Omega_dot]  in R^12,

with eta_dot the inertial velocity (m/s) and Omega_dot the Euler-angle
rates (rad/s).  Forces act in the inertial frame, torques in the body
frame.  All matrix-valued functions broadcast over leading batch
dimensions, so a single call can evaluate thousands of samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePitchError, SingularInertiaError

# Pitch magnitudes at or beyond this are rejected by the Euler-rate map.
PITCH_GUARD = np.pi / 2 - 1e-6

# Condition-number cap for the rotational inertia solve.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class EulerAngles:
    """ZYX (yaw-pitch-roll) Euler angles in radians."""

    phi: float
    theta: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi], dtype=float)

    @staticmethod
    def from_array(a) -> "EulerAngles":
        a = np.asarray(a, dtype=float)
        return EulerAngles(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class InertiaParams:
    """Mass, principal body inertias and gravity, SI units."""

    mass: float
    ix: float
    iy: float
    iz: float
    g: float = 9.81

    def __post_init__(self):
        if not (self.mass > 0 and self.ix > 0 and self.iy > 0 and self.iz > 0):
            raise ValueError("mass and principal inertias must be positive")
        if not self.g > 0:
            raise ValueError("gravity must be positive")

    @property
    def inertia_diag(self) -> np.ndarray:
        return np.array([self.ix, self.iy, self.iz], dtype=float)


@dataclass(frozen=True)
class Wrench:
    """Inertial-frame force (N) and body-frame torque (N m)."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float))
        object.__setattr__(self, "torque", np.asarray(self.torque, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque], axis=-1)

    @staticmethod
    def from_vector(v) -> "Wrench":
        v = np.asarray(v, dtype=float)
        return Wrench(v[..., 0:3], v[..., 3:6])


@dataclass(frozen=True)
class State12:
    """Full vehicle state [eta, Omega, eta_dot, Omega_dot]."""

    eta: np.ndarray
    omega: EulerAngles
    eta_dot: np.ndarray
    omega_dot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        object.__setattr__(self, "eta_dot", np.asarray(self.eta_dot, dtype=float))
        object.__setattr__(self, "omega_dot", np.asarray(self.omega_dot, dtype=float))
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("state components must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.eta, self.omega.as_array(), self.eta_dot, self.omega_dot]
        )

    @staticmethod
    def from_vector(v) -> "State12":
        v = np.asarray(v, dtype=float)
        if v.shape != (12,):
            raise ValueError(f"expected a 12-vector, got shape {v.shape}")
        return State12(v[0:3], EulerAngles.from_array(v[3:6]), v[6:9], v[9:12])


def state_vector(state) -> np.ndarray:
    """Coerce a State12 or array-like into a (..., 12) float array."""
    if isinstance(state, State12):
        return state.as_vector()
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != 12:
        raise ValueError(f"state must have 12 trailing components, got {x.shape}")
    return x


def wrench_arrays(wrench) -> tuple[np.ndarray, np.ndarray]:
    """Coerce a Wrench or (..., 6) array-like into (force, torque) arrays."""
    if isinstance(wrench, Wrench):
        return wrench.force, wrench.torque
    w = np.asarray(wrench, dtype=float)
    if w.shape[-1] != 6:
        raise ValueError(f"wrench must have 6 trailing components, got {w.shape}")
    return w[..., 0:3], w[..., 3:6]


def _angles(omega) -> np.ndarray:
    if isinstance(omega, EulerAngles):
        return omega.as_array()
    a = np.asarray(omega, dtype=float)
    if a.shape[-1] != 3:
        raise ValueError(f"angles must have 3 trailing components, got {a.shape}")
    return a


def _mat3(rows) -> np.ndarray:
    """Stack a 3x3 of broadcastable scalars into a (..., 3, 3) array."""
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def rotation_matrix(omega) -> np.ndarray:
    """Body-to-inertial rotation matrix, ZYX convention.

    R = Rz(psi) @ Ry(theta) @ Rx(phi); columns are the body axes
    expressed in the inertial frame.
    """
    a = _angles(omega)
    phi, theta, psi = a[..., 0], a[..., 1], a[..., 2]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return _mat3(
        [
            (cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf),
            (sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf),
            (-st, ct * sf, ct * cf),
        ]
    )


def euler_rate_map(omega) -> np.ndarray:
    """Map W(Omega) from Euler-angle rates to body angular rates.

    omega_body = W(Omega) @ Omega_dot.  Singular at |theta| = pi/2, so
    pitches within 1e-6 rad of that are rejected.
    """
    a = _angles(omega)
    phi, theta = a[..., 0], a[..., 1]
    if np.any(np.abs(theta) >= PITCH_GUARD):
        raise DegeneratePitchError(
            f"euler_rate_map is degenerate for |theta| >= {PITCH_GUARD:.9f}"
        )
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    one = np.ones_like(phi)
    zero = np.zeros_like(phi)
    return _mat3(
        [
            (one, zero, -st),
            (zero, cf, sf * ct),
            (zero, -sf, cf * ct),
        ]
    )


def inertia_matrix(omega, params: InertiaParams) -> np.ndarray:
    """Rotational inertia M(Omega) of the Euler-angle parameterization.

    Equals W(Omega)^T diag(ix, iy, iz) W(Omega); written out explicitly
    so it stays total (valid through |theta| = pi/2).
    """
    a = _angles(omega)
    phi, theta = a[..., 0], a[..., 1]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    ix, iy, iz = params.ix, params.iy, params.iz
    zero = np.zeros_like(phi)
    m11 = ix * np.ones_like(phi)
    m13 = -ix * st
    m22 = iz + (iy - iz) * cf**2
    m23 = cf * sf * ct * (iy - iz)
    m33 = iz * cf**2 * ct**2 + iy * sf**2 * ct**2 + ix * st**2
    return _mat3(
        [
            (m11, zero, m13),
            (zero, m22, m23),
            (m13, m23, m33),
        ]
    )


def coriolis_matrix(omega, omega_dot, params: InertiaParams) -> np.ndarray:
    """Gyroscopic/centripetal coupling C(Omega, Omega_dot).

    Every element carries exactly one rate factor, so C is linear in
    Omega_dot and vanishes when the rates do.
    """
    a = _angles(omega)
    r = np.asarray(omega_dot, dtype=float)
    phi, theta = a[..., 0], a[..., 1]
    dphi, dtheta, dpsi = r[..., 0], r[..., 1], r[..., 2]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    ix, iy, iz = params.ix, params.iy, params.iz

    c11 = np.zeros_like(dphi * phi)
    c12 = (
        (iy - iz) * (dtheta * cf * sf + dpsi * sf**2 * ct)
        + (iz - iy) * (dpsi * cf**2 * ct)
        - ix * dpsi * ct
    )
    c13 = (iz - iy) * dpsi * cf * sf * ct**2
    c21 = (
        (iz - iy) * (dtheta * cf * sf + dpsi * sf * ct)
        + (iy - iz) * (dpsi * cf**2 * ct)
        + ix * dpsi * ct
    )
    c22 = (iz - iy) * dphi * cf * sf
    c23 = (
        -ix * dpsi * st * ct
        + iy * dpsi * sf**2 * st * ct
        + iz * dpsi * cf**2 * st * ct
    )
    c31 = (iy - iz) * dpsi * ct**2 * sf * cf - ix * dtheta * ct
    c32 = (
        (iz - iy) * (dtheta * cf * sf * st + dphi * sf**2 * ct)
        + (iy - iz) * dphi * cf**2 * ct
        + ix * dpsi * st * ct
    )
    c33 = (
        (iy - iz) * dphi * cf * sf * ct**2
        - iy * dtheta * sf**2 * ct * st
        - iz * dtheta * cf**2 * ct * st
        + ix * dtheta * ct * st
    )
    return _mat3(
        [
            (c11, c12, c13),
            (c21, c22, c23),
            (c31, c32, c33),
        ]
    )


def gravity_vector(params: InertiaParams) -> np.ndarray:
    """Generalized gravity term [0, 0, m g, 0, 0, 0]."""
    out = np.zeros(6)
    out[2] = params.mass * params.g
    return out


def generalized_accel(state, wrench, params: InertiaParams) -> np.ndarray:
    """Generalized acceleration q_ddot = [eta_ddot, Omega_ddot].

    Solves blockdiag(m I3, M(Omega)) q_ddot = T - blockdiag(0, C) q_dot - G
    with G = [0, 0, m g, 0, 0, 0].  Raises SingularInertiaError when the
    rotational inertia block is conditioned worse than 1e12.
    """
    x = state_vector(state)
    force, torque = wrench_arrays(wrench)
    ang = x[..., 3:6]
    ang_rate = x[..., 9:12]

    m_rot = inertia_matrix(ang, params)
    cond = np.linalg.cond(m_rot)
    if np.any(cond > COND_LIMIT):
        raise SingularInertiaError(
            f"inertia matrix condition number {np.max(cond):.3e} exceeds {COND_LIMIT:.0e}"
        )

    eta_dd = force / params.mass
    eta_dd = eta_dd - np.array([0.0, 0.0, params.g])

    cor = coriolis_matrix(ang, ang_rate, params)
    rhs = torque - np.einsum("...ij,...j->...i", cor, ang_rate)
    om_dd = np.linalg.solve(m_rot, rhs[..., None])[..., 0]
    return np.concatenate([eta_dd, om_dd], axis=-1)


def _state_derivative(x: np.ndarray, wrench, params: InertiaParams) -> np.ndarray:
    return np.concatenate(
        [x[..., 6:12], generalized_accel(x, wrench, params)], axis=-1
    )


def step_rk4(state, wrench, params: InertiaParams, dt: float):
    """One classical 4th-order Runge-Kutta step under a fixed wrench.

    The wrench is held constant across the step; callers that model
    state-dependent forcing re-evaluate it per step (or per substep).
    Returns the same kind of object it was given (State12 or array).
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    x = state_vector(state)
    k1 = _state_derivative(x, wrench, params)
    k2 = _state_derivative(x + 0.5 * dt * k1, wrench, params)
    k3 = _state_derivative(x + 0.5 * dt * k2, wrench, params)
    k4 = _state_derivative(x + dt * k3, wrench, params)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if isinstance(state, State12):
        return State12.from_vector(out)
    return out
