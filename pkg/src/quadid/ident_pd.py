"""Estimation of the 16 model parameters from flight data.

The residual per sample is the gap between the wrench implied by the
rigid-body equations (using the candidate inertias) and the wrench
produced by the parameterized command model:

    r(xi) = [m eta_ddot + m g e3; M(xi) Omega_ddot + C(xi) Omega_dot] - T_pd(xi)

r is affine in xi (the inertia entries enter M and C linearly), so the
summed squared cost is quadratic and Gauss-Newton converges in very few
iterations; the iteration is still run with box bounds, a minimum-norm
step for unidentifiable directions, and an Armijo backtracking line
search so that degenerate datasets fail gracefully.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .dynamics import coriolis_matrix, inertia_matrix, rotation_matrix
from .pd_model import PdParams
from .signals import FlightDataset

SVD_CUTOFF = 1e-8
NULLSPACE_COMPONENT = 0.3


def default_bounds() -> np.ndarray:
    """Per-parameter [lo, hi]: gains in [-2, 2], inertias in (0, 0.1]."""
    bounds = np.empty((16, 2))
    bounds[0:13, 0] = -2.0
    bounds[0:13, 1] = 2.0
    bounds[13:16, 0] = 1e-6
    bounds[13:16, 1] = 0.1
    return bounds


@dataclass
class IdentProblem:
    """Identification problem over a preprocessed dataset.

    The dataset must carry derivative series; mass and gravity come
    from the inertia prior (they are not identified).  freeze marks
    parameters held at their initial value.
    """

    dataset: FlightDataset
    mass: float
    g: float = 9.81
    bounds: np.ndarray = field(default_factory=default_bounds)
    init: np.ndarray | None = None
    freeze: np.ndarray | None = None
    max_iter: int = 50
    grad_tol: float = 1e-10

    def __post_init__(self):
        if self.dataset.derivs is None:
            raise ValueError("dataset has no derivative series; preprocess it first")
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.shape != (16, 2):
            raise ValueError("bounds must be a (16, 2) array")
        if not np.all(np.isfinite(self.bounds)):
            raise ValueError("bounds must be finite")
        if np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValueError("lower bounds exceed upper bounds")
        if self.init is None:
            init = np.zeros(16)
            init[12] = self.mass * self.g
            init[13:16] = 0.005
            self.init = np.clip(init, self.bounds[:, 0], self.bounds[:, 1])
        else:
            self.init = np.asarray(self.init, dtype=float).copy()
        if self.freeze is None:
            self.freeze = np.zeros(16, dtype=bool)
        else:
            self.freeze = np.asarray(self.freeze, dtype=bool).copy()


@dataclass
class IdentResult:
    xi_hat: PdParams
    cost_trajectory: list
    residual_rms: np.ndarray
    converged: bool
    n_iter: int
    unidentifiable: list
    message: str


def _residual_matrix(xi: np.ndarray, X: np.ndarray, Qdd: np.ndarray,
                     MU: np.ndarray, mass: float, g: float) -> np.ndarray:
    """Vectorized 6-channel residual over all samples, shape (m, 6)."""
    ang = X[:, 3:6]
    rates = X[:, 9:12]
    inert = SimpleNamespace(ix=xi[13], iy=xi[14], iz=xi[15])

    m_rot = inertia_matrix(ang, inert)
    cor = coriolis_matrix(ang, rates, inert)
    t_rigid = np.empty_like(Qdd)
    t_rigid[:, 0:3] = mass * Qdd[:, 0:3]
    t_rigid[:, 2] += mass * g
    t_rigid[:, 3:6] = (
        np.einsum("kij,kj->ki", m_rot, Qdd[:, 3:6])
        + np.einsum("kij,kj->ki", cor, rates)
    )

    rcol = rotation_matrix(ang)[:, :, 2]
    s_z = xi[0] * MU[:, 0] - xi[6] * X[:, 8] - xi[10] * Qdd[:, 2] + xi[12]
    t_pd = np.empty_like(Qdd)
    t_pd[:, 0:3] = rcol * s_z[:, None]
    t_pd[:, 3] = xi[1] * MU[:, 1] - xi[4] * X[:, 3] - xi[7] * X[:, 9]
    t_pd[:, 4] = xi[2] * MU[:, 2] - xi[5] * X[:, 4] - xi[8] * X[:, 10]
    t_pd[:, 5] = xi[3] * MU[:, 3] - xi[9] * X[:, 11] - xi[11] * Qdd[:, 5]
    return t_rigid - t_pd


def wrench_residual(params: PdParams, sample, mass: float, g: float = 9.81) -> np.ndarray:
    """Residual for one (state, q_ddot, mu) sample, in N and N m."""
    x, qdd, mu = sample
    x = np.asarray(x, dtype=float).reshape(1, 12)
    qdd = np.asarray(qdd, dtype=float).reshape(1, 6)
    mu = np.asarray(mu, dtype=float).reshape(1, 4)
    return _residual_matrix(np.asarray(params.xi), x, qdd, mu, mass, g)[0]


def _assemble_affine(X, Qdd, MU, mass, g):
    """Exact affine decomposition r(xi) = r0 + J xi (vectorized)."""
    m = X.shape[0]
    r0 = _residual_matrix(np.zeros(16), X, Qdd, MU, mass, g).ravel()
    jac = np.empty((6 * m, 16))
    for i in range(16):
        e = np.zeros(16)
        e[i] = 1.0
        jac[:, i] = _residual_matrix(e, X, Qdd, MU, mass, g).ravel() - r0
    return r0, jac


def _projected_gradient(grad, xi, lo, hi, frozen):
    pg = grad.copy()
    pg[frozen] = 0.0
    at_lo = xi <= lo + 1e-14
    at_hi = xi >= hi - 1e-14
    pg[at_lo] = np.minimum(pg[at_lo], 0.0)
    pg[at_hi] = np.maximum(pg[at_hi], 0.0)
    return pg


def identify_pd(problem: IdentProblem) -> IdentResult:
    """Bounded Gauss-Newton fit of the 16-parameter vector.

    The quadratic cost J(xi) = sum_k ||r(xi; k)||^2 dt is minimized with
    minimum-norm steps (truncated SVD of the residual Jacobian) so that
    unexcited parameter directions stay at their initial values; those
    directions are reported in the result.
    """
    ds = problem.dataset
    X = ds.states.values
    Qdd = ds.derivs.values[:, 6:12]
    MU = ds.inputs.values
    n_samples = X.shape[0]
    if n_samples < 160:
        raise ValueError(
            f"need at least 10 samples per parameter (160), got {n_samples}"
        )
    dt = ds.dt
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    frozen = problem.freeze

    r0, jac = _assemble_affine(X, Qdd, MU, problem.mass, problem.g)
    jac_free = jac.copy()
    jac_free[:, frozen] = 0.0

    svals = np.linalg.svd(jac_free, compute_uv=False)
    smax = svals[0] if svals.size else 0.0

    def cost(xi):
        r = r0 + jac @ xi
        return dt * float(r @ r)

    def grad(xi):
        r = r0 + jac @ xi
        return 2.0 * dt * (jac.T @ r)

    xi = np.clip(problem.init, lo, hi)
    xi[frozen] = problem.init[frozen]
    costs = [cost(xi)]
    converged = False
    message = "max iterations reached"
    n_iter = 0

    for it in range(problem.max_iter):
        g_vec = grad(xi)
        pg = _projected_gradient(g_vec, xi, lo, hi, frozen)
        if np.max(np.abs(pg)) < problem.grad_tol * max(1.0, costs[0]):
            converged = True
            message = "projected gradient below tolerance"
            break

        r = r0 + jac @ xi
        u_mat, s, vt = np.linalg.svd(jac_free, full_matrices=False)
        keep = s > SVD_CUTOFF * smax
        inv_s = np.where(keep, np.divide(1.0, s, where=s > 0), 0.0)
        step = -(vt.T * inv_s) @ (u_mat.T @ r)
        step[frozen] = 0.0

        alpha = 1.0
        accepted = False
        for _ in range(40):
            cand = np.clip(xi + alpha * step, lo, hi)
            cand[frozen] = xi[frozen]
            delta = cand - xi
            pred = float(g_vec @ delta)
            new_cost = cost(cand)
            if new_cost <= costs[-1] + 1e-4 * pred and new_cost <= costs[-1]:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            message = "line search could not reduce the cost"
            converged = np.max(np.abs(pg)) < 1e-6 * max(1.0, costs[0])
            break
        xi = cand
        costs.append(new_cost)
        n_iter = it + 1

    else:
        pass

    # parameters spanned by near-null singular directions are unidentifiable
    u_mat, s, vt = np.linalg.svd(jac_free, full_matrices=False)
    null_dirs = vt[s <= SVD_CUTOFF * smax] if smax > 0 else vt
    unident = set(np.flatnonzero(frozen))
    if null_dirs.size:
        comp = np.max(np.abs(null_dirs), axis=0)
        unident |= set(np.flatnonzero(comp > NULLSPACE_COMPONENT))
    if smax == 0.0:
        unident = set(range(16))

    final_res = (r0 + jac @ xi).reshape(-1, 6)
    residual_rms = np.sqrt(np.mean(final_res**2, axis=0))
    xi_final = xi.copy()
    xi_final[13:16] = np.maximum(xi_final[13:16], 1e-9)
    return IdentResult(
        xi_hat=PdParams(xi_final),
        cost_trajectory=costs,
        residual_rms=residual_rms,
        converged=bool(converged),
        n_iter=n_iter,
        unidentifiable=sorted(unident),
        message=message,
    )
