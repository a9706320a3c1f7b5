"""Receding-horizon trajectory tracking with a plug-in prediction model.

Each sample solves the finite-horizon problem

    min  1/2 e_N' Q e_N + sum_k  1/2 e_k' Q e_k + 1/2 u_k' R u_k
    s.t. x_{k+1} = F(x_k, u_k),   x_0 = measured state,
         input box bounds (vertical velocity, tilt, yaw rate)

where e_k = x_k - x_ref,k and F is an RK4 discretization of the model
derivative.  The transcription keeps all shooting states and condenses
them exactly through the linearized dynamics (only input bounds remain,
so the QP is solved in the stacked input increment by a projected-Newton
active-set method).  A real-time-iteration mode performs exactly one
Gauss-Newton step from the shifted warm start per sample.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError
from .evaluation import TrajectoryKind, reference_window
from .pd_model import INPUT_HI, INPUT_LO

NX = 12
NU = 4


@dataclass
class OcpConfig:
    """Horizon, weights, bounds and solver settings."""

    n_horizon: int = 30
    dt: float = 1.0 / 30.0
    q_diag: np.ndarray = field(
        default_factory=lambda: np.array([2.0] * 3 + [0.0] * 9)
    )
    r_diag: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    u_lo: np.ndarray = field(default_factory=lambda: INPUT_LO.copy())
    u_hi: np.ndarray = field(default_factory=lambda: INPUT_HI.copy())
    max_sqp_iter: int = 25
    rti: bool = True
    substeps: int = 4
    kkt_tol: float = 1e-8
    fd_step: float = 1e-5
    armijo_c1: float = 1e-4
    max_linesearch: int = 30
    velocity_refs: bool = True
    psi_ref: float = 0.0

    def __post_init__(self):
        self.q_diag = np.asarray(self.q_diag, dtype=float)
        self.r_diag = np.asarray(self.r_diag, dtype=float)
        self.u_lo = np.asarray(self.u_lo, dtype=float)
        self.u_hi = np.asarray(self.u_hi, dtype=float)
        if self.n_horizon < 1:
            raise ValueError("n_horizon must be >= 1")
        if self.q_diag.shape != (NX,) or np.any(self.q_diag < 0):
            raise ValueError("q_diag must be a nonnegative 12-vector")
        if self.r_diag.shape != (NU,) or np.any(self.r_diag <= 0):
            raise ValueError("r_diag must be a positive 4-vector")
        if np.any(self.u_lo >= self.u_hi):
            raise ValueError("input bounds cross")


class CallableModel:
    """Adapter so plain f(x, u) callables satisfy the model protocol."""

    def __init__(self, f):
        self._f = f

    def derivative(self, x, u):
        return np.asarray(self._f(x, u), dtype=float)

    def derivative_batch(self, X, U):
        return np.stack([self.derivative(x, u) for x, u in zip(X, U)])


def as_model(model):
    if hasattr(model, "derivative"):
        return model
    if callable(model):
        return CallableModel(model)
    raise TypeError("model must expose derivative(x, u) or be callable")


def discretize(model, x, u, dt: float, substeps: int = 1) -> np.ndarray:
    """RK4 step(s) of the model derivative over one sample interval."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    model = as_model(model)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        k1 = model.derivative(x, u)
        k2 = model.derivative(x + 0.5 * h * k1, u)
        k3 = model.derivative(x + 0.5 * h * k2, u)
        k4 = model.derivative(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _step_batch(model, X, U, dt, substeps):
    h = dt / substeps
    x = X
    for _ in range(substeps):
        k1 = model.derivative_batch(x, U)
        k2 = model.derivative_batch(x + 0.5 * h * k1, U)
        k3 = model.derivative_batch(x + 0.5 * h * k2, U)
        k4 = model.derivative_batch(x + h * k3, U)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def rollout(model, x0, U, dt, substeps) -> np.ndarray:
    """Simulate the model over the horizon; returns (N + 1, 12) states."""
    model = as_model(model)
    n = U.shape[0]
    X = np.empty((n + 1, NX))
    X[0] = x0
    for k in range(n):
        X[k + 1] = discretize(model, X[k], U[k], dt, substeps)
    if not np.all(np.isfinite(X)):
        raise DivergenceError("model prediction diverged during rollout")
    return X


def linearize_trajectory(model, X, U, dt, substeps, fd_step):
    """Central-difference step Jacobians along a trajectory.

    Perturbations of all shooting nodes are evaluated in one batched
    call.  Returns A (N,12,12) and B (N,12,4).
    """
    model = as_model(model)
    if not hasattr(model, "derivative_batch"):
        model = CallableModel(model.derivative)
    n = U.shape[0]
    hx = fd_step * (1.0 + np.abs(X[:n]))
    hu = fd_step * (1.0 + np.abs(U))
    reps = 2 * (NX + NU)
    Xb = np.repeat(X[:n, None, :], reps, axis=1)
    Ub = np.repeat(U[:, None, :], reps, axis=1)
    for i in range(NX):
        Xb[:, 2 * i, i] += hx[:, i]
        Xb[:, 2 * i + 1, i] -= hx[:, i]
    for j in range(NU):
        c = 2 * NX + 2 * j
        Ub[:, c, j] += hu[:, j]
        Ub[:, c + 1, j] -= hu[:, j]
    F = _step_batch(
        model, Xb.reshape(-1, NX), Ub.reshape(-1, NU), dt, substeps
    ).reshape(n, reps, NX)
    A = np.empty((n, NX, NX))
    B = np.empty((n, NX, NU))
    for i in range(NX):
        A[:, :, i] = (F[:, 2 * i] - F[:, 2 * i + 1]) / (2.0 * hx[:, i])[:, None]
    for j in range(NU):
        c = 2 * NX + 2 * j
        B[:, :, j] = (F[:, c] - F[:, c + 1]) / (2.0 * hu[:, j])[:, None]
    return A, B


def ocp_cost(X, U, refs, q_diag, r_diag) -> float:
    e = X - refs
    stage = 0.5 * np.sum(e[:-1] ** 2 * q_diag) + 0.5 * np.sum(U**2 * r_diag)
    terminal = 0.5 * float(e[-1] ** 2 @ q_diag)
    return float(stage + terminal)


def _condense(A, B, X, U, refs, q_diag, r_diag):
    """Gauss-Newton gradient and Hessian of the condensed input problem.

    Sensitivities S_k = d x_k / d U are propagated forward; the terminal
    weight equals the stage weight, so every predicted state x_1..x_N
    contributes q_diag.
    """
    n = U.shape[0]
    nz = n * NU
    S = np.zeros((NX, nz))
    H = np.zeros((nz, nz))
    g = np.zeros(nz)
    for k in range(n):
        S = A[k] @ S
        S[:, k * NU:(k + 1) * NU] += B[k]
        e = X[k + 1] - refs[k + 1]
        Sw = q_diag[:, None] * S
        H += S.T @ Sw
        g += S.T @ (q_diag * e)
    for k in range(n):
        idx = slice(k * NU, (k + 1) * NU)
        H[idx, idx] += np.diag(r_diag)
    g += (U * r_diag).ravel()
    return H, g


def projected_gradient_norm(g, x, lo, hi) -> float:
    pg = g.copy()
    at_lo = x <= lo + 1e-12
    at_hi = x >= hi - 1e-12
    pg[at_lo] = np.minimum(pg[at_lo], 0.0)
    pg[at_hi] = np.maximum(pg[at_hi], 0.0)
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def boxqp(H, g, lo, hi, x0=None, max_iter=100, tol=1e-10):
    """Minimize 1/2 x'Hx + g'x subject to lo <= x <= hi.

    Projected-Newton active-set iteration with an Armijo backtracking
    line search; H must be positive definite.  Deterministic.
    """
    n = H.shape[0]
    x = np.clip(x0 if x0 is not None else np.zeros(n), lo, hi)
    value = 0.5 * x @ H @ x + g @ x
    status = "max_iter"
    for _ in range(max_iter):
        grad = g + H @ x
        clamped = ((x <= lo + 1e-14) & (grad > 0)) | ((x >= hi - 1e-14) & (grad < 0))
        free = ~clamped
        if not np.any(free):
            status = "all_clamped"
            break
        if np.max(np.abs(grad[free])) < tol:
            status = "converged"
            break
        search = np.zeros(n)
        try:
            search[free] = -np.linalg.solve(H[np.ix_(free, free)], grad[free])
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(H) / n
            search[free] = -np.linalg.solve(
                H[np.ix_(free, free)] + jitter * np.eye(int(np.sum(free))),
                grad[free],
            )
        sdotg = float(search @ grad)
        if sdotg >= 0:
            status = "no_descent"
            break
        alpha = 1.0
        improved = False
        for _ in range(25):
            xc = np.clip(x + alpha * search, lo, hi)
            vc = 0.5 * xc @ H @ xc + g @ xc
            if vc <= value + 1e-4 * float(grad @ (xc - x)):
                improved = True
                break
            alpha *= 0.5
        if not improved:
            status = "line_search_failed"
            break
        if value - vc < 1e-16 * (1.0 + abs(value)):
            x, value = xc, vc
            status = "converged"
            break
        x, value = xc, vc
    pg = projected_gradient_norm(g + H @ x, x, lo, hi)
    return x, {"status": status, "projected_gradient": pg, "value": float(value)}


@dataclass
class OcpSolution:
    """Inputs, predicted states and solver diagnostics for one sample."""

    inputs: np.ndarray
    states: np.ndarray
    cost: float
    kkt_residual: float
    kkt_initial: float
    n_iter: int
    converged: bool
    cost_trajectory: list = field(default_factory=list)

    def shifted(self) -> "OcpSolution":
        """Warm start for the next sample: drop u_0, repeat the tail input."""
        u = np.vstack([self.inputs[1:], self.inputs[-1]])
        return replace(self, inputs=u)


def solve_ocp(model, cfg: OcpConfig, x0, refs, warm: OcpSolution | None = None
              ) -> OcpSolution:
    """Solve the horizon problem from state x0 against the reference window.

    refs must be (N + 1, 12).  With cfg.rti the solver performs exactly
    one Gauss-Newton iteration from the warm start; otherwise it
    iterates with an Armijo line search on the rolled-out cost until the
    projected gradient meets cfg.kkt_tol.
    """
    model = as_model(model)
    x0 = np.asarray(x0, dtype=float)
    refs = np.asarray(refs, dtype=float)
    n = cfg.n_horizon
    if refs.shape != (n + 1, NX):
        raise ValueError(f"refs must have shape {(n + 1, NX)}, got {refs.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")

    lo = np.tile(cfg.u_lo, n)
    hi = np.tile(cfg.u_hi, n)
    if warm is not None:
        U = np.clip(warm.inputs.copy(), cfg.u_lo, cfg.u_hi)
    else:
        U = np.zeros((n, NU))
    X = rollout(model, x0, U, cfg.dt, cfg.substeps)
    cost = ocp_cost(X, U, refs, cfg.q_diag, cfg.r_diag)
    costs = [cost]

    kkt_initial = None
    kkt_final = np.inf
    n_iter = 0
    converged = False
    max_iter = 1 if cfg.rti else cfg.max_sqp_iter

    for _ in range(max_iter):
        A, B = linearize_trajectory(model, X, U, cfg.dt, cfg.substeps, cfg.fd_step)
        H, g = _condense(A, B, X, U, refs, cfg.q_diag, cfg.r_diag)
        u_flat = U.ravel()
        kkt_now = projected_gradient_norm(g, u_flat, lo, hi)
        if kkt_initial is None:
            kkt_initial = kkt_now
        if kkt_now < cfg.kkt_tol:
            kkt_final = kkt_now
            converged = True
            break

        d_flat, _ = boxqp(H, g, lo - u_flat, hi - u_flat)
        dU = d_flat.reshape(n, NU)

        if cfg.rti:
            U = np.clip(U + dU, cfg.u_lo, cfg.u_hi)
            X = rollout(model, x0, U, cfg.dt, cfg.substeps)
            cost = ocp_cost(X, U, refs, cfg.q_diag, cfg.r_diag)
            costs.append(cost)
            n_iter = 1
            kkt_final = projected_gradient_norm(g + H @ d_flat, U.ravel(), lo, hi)
            break

        pred = float(g @ d_flat)
        if pred >= -1e-16 * (1.0 + abs(cost)):
            kkt_final = kkt_now
            converged = True
            break
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_linesearch):
            Uc = np.clip(U + alpha * dU, cfg.u_lo, cfg.u_hi)
            Xc = rollout(model, x0, Uc, cfg.dt, cfg.substeps)
            cc = ocp_cost(Xc, Uc, refs, cfg.q_diag, cfg.r_diag)
            if cc <= cost + cfg.armijo_c1 * alpha * pred:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            kkt_final = kkt_now
            break
        U, X, cost = Uc, Xc, cc
        costs.append(cost)
        n_iter += 1

    if not np.isfinite(kkt_final):
        # iteration cap hit: report the gradient at the final iterate
        A, B = linearize_trajectory(model, X, U, cfg.dt, cfg.substeps, cfg.fd_step)
        _, g = _condense(A, B, X, U, refs, cfg.q_diag, cfg.r_diag)
        kkt_final = projected_gradient_norm(g, U.ravel(), lo, hi)
        converged = kkt_final < cfg.kkt_tol

    return OcpSolution(
        inputs=U,
        states=X,
        cost=cost,
        kkt_residual=float(kkt_final),
        kkt_initial=float(kkt_initial if kkt_initial is not None else np.inf),
        n_iter=n_iter,
        converged=converged,
        cost_trajectory=costs,
    )


@dataclass
class TrackingLog:
    """Per-sample record of a receding-horizon run."""

    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    refs: np.ndarray
    cost: np.ndarray
    kkt: np.ndarray
    solve_ms: np.ndarray
    aborted: bool = False
    meta: dict = field(default_factory=dict)

    CSV_HEADER = (
        ["t"]
        + [f"x{i}" for i in range(NX)]
        + [f"u{i}" for i in range(NU)]
        + ["ref_x", "ref_y", "ref_z", "cost", "kkt", "solve_ms"]
    )

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def position_error(self) -> np.ndarray:
        return self.states[:, 0:3] - self.refs

    def save_csv(self, path) -> None:
        table = np.column_stack(
            [self.t, self.states, self.inputs, self.refs,
             self.cost, self.kkt, self.solve_ms]
        )
        np.savetxt(
            path, table, delimiter=",",
            header=",".join(self.CSV_HEADER), comments="", fmt="%.17g",
        )

    @staticmethod
    def load_csv(path) -> "TrackingLog":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        if header != TrackingLog.CSV_HEADER:
            raise ValueError(f"unexpected tracking-log header {header}")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return TrackingLog(
            t=table[:, 0],
            states=table[:, 1:13],
            inputs=table[:, 13:17],
            refs=table[:, 17:20],
            cost=table[:, 20],
            kkt=table[:, 21],
            solve_ms=table[:, 22],
        )


def track(model, plant, trajectory: TrajectoryKind, cfg: OcpConfig,
          duration: float, x_init) -> TrackingLog:
    """Drive the plant with receding-horizon control along a trajectory.

    The plant is the ground-truth simulator; the model is whatever the
    controller believes.  The first sample is solved to convergence to
    seed the warm start; subsequent samples follow cfg.rti.  A plant
    that leaves the attitude envelope aborts the run with a partial log.
    """
    model = as_model(model)
    n_steps = int(round(duration / cfg.dt))
    x_init = np.asarray(x_init, dtype=float)
    plant.reset(x_init)

    rows_t, rows_x, rows_u, rows_r = [], [], [], []
    rows_cost, rows_kkt, rows_ms = [], [], []
    aborted = False
    warm = None
    full_cfg = replace(cfg, rti=False)

    for k in range(n_steps):
        t_k = k * cfg.dt
        refs = reference_window(
            trajectory, t_k, cfg.dt, cfg.n_horizon,
            velocity_refs=cfg.velocity_refs, psi_ref=cfg.psi_ref,
        )
        step_cfg = full_cfg if (k == 0 and cfg.rti) else cfg
        tic = time.perf_counter()
        sol = solve_ocp(model, step_cfg, plant.state, refs, warm)
        elapsed_ms = (time.perf_counter() - tic) * 1e3

        u0 = np.clip(sol.inputs[0], cfg.u_lo, cfg.u_hi)
        rows_t.append(t_k)
        rows_x.append(plant.state.copy())
        rows_u.append(u0)
        rows_r.append(refs[0, 0:3])
        rows_cost.append(sol.cost)
        rows_kkt.append(sol.kkt_residual)
        rows_ms.append(elapsed_ms)

        try:
            plant.step(u0)
        except DivergenceError:
            aborted = True
            break
        warm = sol.shifted()

    return TrackingLog(
        t=np.array(rows_t),
        states=np.array(rows_x).reshape(-1, NX),
        inputs=np.array(rows_u).reshape(-1, NU),
        refs=np.array(rows_r).reshape(-1, 3),
        cost=np.array(rows_cost),
        kkt=np.array(rows_kkt),
        solve_ms=np.array(rows_ms),
        aborted=aborted,
        meta={
            "trajectory": trajectory.value,
            "duration": duration,
            "velocity_refs": cfg.velocity_refs,
            "psi_ref": cfg.psi_ref,
        },
    )
