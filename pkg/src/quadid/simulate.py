"""Ground-truth plants and excitation signals for data generation.

Two plants are provided:

* ``ClosedFormPdPlant`` integrates the exact closed-loop model
  x_dot = f(x, mu, xi) (the implicit elimination of the inner-loop
  wrench).  This is the reference plant for identification and tracking
  experiments; with the stock parameter set the one-step-delayed
  feedback form below is discretely unstable, the implicit form is not.
* ``InnerLoopPlant`` composes the rigid-body equations with the
  parameterized wrench, feeding back the previous step's generalized
  acceleration (one-step delay avoids the algebraic loop).  Suitable
  when the acceleration-feedback gains are small against the mass.

Excitation superposes per-channel linear chirps with (optionally) weak
stabilizing feedback; everything is clipped to the command bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    InertiaParams,
    PITCH_GUARD,
    generalized_accel,
)
from .errors import DivergenceError
from .pd_model import (
    INPUT_HI,
    INPUT_LO,
    PdModel,
    PdParams,
    pd_wrench_matrix,
)
from .signals import FlightDataset, TimeSeries


def _check_state(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError("plant state is no longer finite")
    if abs(x[4]) >= PITCH_GUARD:
        raise DivergenceError(f"pitch {x[4]:.4f} rad left the valid envelope")


class ClosedFormPdPlant:
    """Ground truth: the closed-loop model integrated with fixed-step RK4."""

    def __init__(self, model: PdModel, dt: float, substeps: int = 10):
        self.model = model
        self.dt = float(dt)
        self.substeps = int(substeps)
        self._x = np.zeros(12)

    @property
    def state(self) -> np.ndarray:
        return self._x

    def reset(self, x_init) -> None:
        x = np.asarray(x_init, dtype=float).copy()
        if x.shape != (12,):
            raise ValueError("plant state must be a 12-vector")
        self._x = x

    def step(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        x = self._x
        h = self.dt / self.substeps
        f = self.model.derivative
        for _ in range(self.substeps):
            k1 = f(x, u)
            k2 = f(x + 0.5 * h * k1, u)
            k3 = f(x + 0.5 * h * k2, u)
            k4 = f(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_state(x)
        self._x = x
        return self._x

    def derivative(self, x, u) -> np.ndarray:
        return self.model.derivative(x, u)


class InnerLoopPlant:
    """Rigid body driven by the parameterized wrench, delayed accel feedback."""

    def __init__(self, params: PdParams, inertia: InertiaParams,
                 dt: float, substeps: int = 10):
        self.params = params
        self.inertia = inertia
        self.dt = float(dt)
        self.substeps = int(substeps)
        self._x = np.zeros(12)
        self._qddot = np.zeros(6)

    @property
    def state(self) -> np.ndarray:
        return self._x

    def reset(self, x_init) -> None:
        x = np.asarray(x_init, dtype=float).copy()
        if x.shape != (12,):
            raise ValueError("plant state must be a 12-vector")
        self._x = x
        self._qddot = np.zeros(6)

    def _derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        wrench = pd_wrench_matrix(x, u, self.params, accel=self._qddot)
        acc = generalized_accel(x, wrench, self.inertia)
        return np.concatenate([x[6:12], acc])

    def step(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        x = self._x
        h = self.dt / self.substeps
        for _ in range(self.substeps):
            k1 = self._derivative(x, u)
            k2 = self._derivative(x + 0.5 * h * k1, u)
            k3 = self._derivative(x + 0.5 * h * k2, u)
            k4 = self._derivative(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_state(x)
            self._qddot = self._derivative(x, u)[6:12]
        self._x = x
        return self._x


@dataclass
class ChirpSpec:
    """Linear frequency sweep amp * sin(2 pi (f0 t + (f1 - f0) t^2 / 2T) + phase)."""

    amp: float = 0.0
    f0: float = 0.05
    f1: float = 2.0
    phase: float = 0.0

    def __call__(self, t: float, duration: float) -> float:
        sweep = self.f0 * t + 0.5 * (self.f1 - self.f0) * t * t / max(duration, 1e-9)
        return self.amp * np.sin(2.0 * np.pi * sweep + self.phase)


@dataclass
class ExcitationConfig:
    """Chirps per command channel plus weak stabilizing feedback.

    Feedback gains default to zero (pure open-loop chirps); profiles
    whose plant is open-loop unstable configure them explicitly.  The
    tilt corrections are yaw-compensated so they keep working while the
    heading wanders.
    """

    chirps: list = field(
        default_factory=lambda: [
            ChirpSpec(amp=1.5),
            ChirpSpec(amp=0.3, phase=1.3),
            ChirpSpec(amp=0.3, phase=2.1),
            ChirpSpec(amp=0.8, phase=0.7),
        ]
    )
    z_vel_gain: float = 0.0
    z_pos_gain: float = 0.0
    xy_pos_gain: float = 0.0
    xy_vel_gain: float = 0.0
    yaw_gain: float = 0.0
    hold_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    g: float = 9.81

    def __call__(self, t: float, x: np.ndarray, duration: float) -> np.ndarray:
        c = np.array([ch(t, duration) for ch in self.chirps])
        u = c.copy()
        # vertical channel
        u[0] += self.z_vel_gain * x[8] + self.z_pos_gain * (x[2] - self.hold_position[2])
        # horizontal recentering mapped through the current heading
        ax = -self.xy_pos_gain * (x[0] - self.hold_position[0]) - self.xy_vel_gain * x[6]
        ay = -self.xy_pos_gain * (x[1] - self.hold_position[1]) - self.xy_vel_gain * x[7]
        cpsi, spsi = np.cos(x[5]), np.sin(x[5])
        u[2] += (cpsi * ax + spsi * ay) / self.g
        u[1] += (spsi * ax - cpsi * ay) / self.g
        # yaw recentering
        u[3] += -self.yaw_gain * x[5]
        return np.clip(u, INPUT_LO, INPUT_HI)


def generate_dataset(plant, excitation: ExcitationConfig, duration: float,
                     dt: float, x_init=None, noise_sigma: float = 0.0,
                     rng: np.random.Generator | None = None) -> FlightDataset:
    """Drive the plant with the excitation and record states and inputs.

    Gaussian measurement noise of the given per-channel sigma is added
    to the recorded state channels only (commands are known exactly).
    """
    n = int(round(duration / dt))
    if n < 2:
        raise ValueError("duration too short for a dataset")
    if x_init is None:
        x_init = np.zeros(12)
    plant.reset(np.asarray(x_init, dtype=float))

    states = np.empty((n, 12))
    inputs = np.empty((n, 4))
    for k in range(n):
        t = k * dt
        u = excitation(t, plant.state, duration)
        states[k] = plant.state
        inputs[k] = u
        plant.step(u)

    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        states = states + rng.normal(0.0, noise_sigma, size=states.shape)

    return FlightDataset(
        states=TimeSeries(t0=0.0, dt=dt, values=states),
        inputs=TimeSeries(t0=0.0, dt=dt, values=inputs),
    )
