"""Sparse regression of vehicle dynamics onto a candidate-function library.

The library row is [1, x, u, x^2, x u, sin(ang), cos(ang), x sin(ang),
x cos(ang)] with the trigonometric terms taken over the three Euler
angles individually.  Column order is a pure function of the library
spec, so fitted coefficient matrices are serialization stable.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonConvergenceWarning, RankDeficiencyWarning
from .signals import FlightDataset, INPUT_COLUMNS, STATE_COLUMNS


@dataclass(frozen=True)
class LibrarySpec:
    """Flags that select candidate-function groups."""

    include_constant: bool = True
    poly_degree: int = 2
    include_control_linear: bool = True
    include_state_control_cross: bool = True
    include_trig: bool = True
    include_state_trig_cross: bool = True
    angle_indices: tuple = (3, 4, 5)

    def __post_init__(self):
        if self.poly_degree not in (1, 2):
            raise ValueError("poly_degree must be 1 or 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["angle_indices"] = list(self.angle_indices)
        return d

    @staticmethod
    def from_dict(d: dict) -> "LibrarySpec":
        d = dict(d)
        d["angle_indices"] = tuple(d.get("angle_indices", (3, 4, 5)))
        return LibrarySpec(**d)


def library_terms(spec: LibrarySpec, n_states: int, n_controls: int) -> list[tuple]:
    """Deterministic, ordered term descriptors for the given dimensions.

    Term tuples: ("const",), ("x", i), ("u", j), ("xx", i, j) with
    i <= j, ("xu", i, j), ("sin", a), ("cos", a), ("xsin", i, a),
    ("xcos", i, a).
    """
    terms: list[tuple] = []
    if spec.include_constant:
        terms.append(("const",))
    terms.extend(("x", i) for i in range(n_states))
    if spec.include_control_linear:
        terms.extend(("u", j) for j in range(n_controls))
    if spec.poly_degree >= 2:
        terms.extend(
            ("xx", i, j) for i in range(n_states) for j in range(i, n_states)
        )
    if spec.include_state_control_cross:
        terms.extend(
            ("xu", i, j) for i in range(n_states) for j in range(n_controls)
        )
    if spec.include_trig:
        terms.extend(("sin", a) for a in spec.angle_indices)
        terms.extend(("cos", a) for a in spec.angle_indices)
    if spec.include_state_trig_cross:
        terms.extend(
            ("xsin", i, a) for a in spec.angle_indices for i in range(n_states)
        )
        terms.extend(
            ("xcos", i, a) for a in spec.angle_indices for i in range(n_states)
        )
    return terms


def term_label(term: tuple, state_names=None, input_names=None) -> str:
    sn = state_names or STATE_COLUMNS
    un = input_names or INPUT_COLUMNS
    kind = term[0]
    if kind == "const":
        return "1"
    if kind == "x":
        return sn[term[1]]
    if kind == "u":
        return un[term[1]]
    if kind == "xx":
        return f"{sn[term[1]]}*{sn[term[2]]}"
    if kind == "xu":
        return f"{sn[term[1]]}*{un[term[2]]}"
    if kind == "sin":
        return f"sin({sn[term[1]]})"
    if kind == "cos":
        return f"cos({sn[term[1]]})"
    if kind == "xsin":
        return f"{sn[term[1]]}*sin({sn[term[2]]})"
    if kind == "xcos":
        return f"{sn[term[1]]}*cos({sn[term[2]]})"
    raise ValueError(f"unknown term {term}")


def _evaluate_terms(terms, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    m = X.shape[0]
    out = np.empty((m, len(terms)))
    for col, term in enumerate(terms):
        kind = term[0]
        if kind == "const":
            out[:, col] = 1.0
        elif kind == "x":
            out[:, col] = X[:, term[1]]
        elif kind == "u":
            out[:, col] = U[:, term[1]]
        elif kind == "xx":
            out[:, col] = X[:, term[1]] * X[:, term[2]]
        elif kind == "xu":
            out[:, col] = X[:, term[1]] * U[:, term[2]]
        elif kind == "sin":
            out[:, col] = np.sin(X[:, term[1]])
        elif kind == "cos":
            out[:, col] = np.cos(X[:, term[1]])
        elif kind == "xsin":
            out[:, col] = X[:, term[1]] * np.sin(X[:, term[2]])
        elif kind == "xcos":
            out[:, col] = X[:, term[1]] * np.cos(X[:, term[2]])
        else:
            raise ValueError(f"unknown term {term}")
    return out


def build_library(X: np.ndarray, U: np.ndarray, spec: LibrarySpec):
    """Evaluate the candidate library; returns (Theta, labels)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if X.shape[0] != U.shape[0]:
        raise ValueError(
            f"state and control row counts differ: {X.shape[0]} vs {U.shape[0]}"
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(U))):
        raise ValueError("library inputs must be finite")
    terms = library_terms(spec, X.shape[1], U.shape[1])
    theta = _evaluate_terms(terms, X, U)
    labels = [term_label(t) if X.shape[1] == 12 and U.shape[1] == 4
              else _generic_label(t) for t in terms]
    return theta, labels


def _generic_label(term: tuple) -> str:
    kind = term[0]
    if kind == "const":
        return "1"
    if kind == "x":
        return f"x{term[1]}"
    if kind == "u":
        return f"u{term[1]}"
    if kind == "xx":
        return f"x{term[1]}*x{term[2]}"
    if kind == "xu":
        return f"x{term[1]}*u{term[2]}"
    if kind == "sin":
        return f"sin(x{term[1]})"
    if kind == "cos":
        return f"cos(x{term[1]})"
    if kind == "xsin":
        return f"x{term[1]}*sin(x{term[2]})"
    return f"x{term[1]}*cos(x{term[2]})"


@dataclass
class SolverConfig:
    """Sparse-regression solver settings."""

    method: str = "sr3"
    lam: float = 0.05
    threshold: float = 0.05
    max_iter: int = 100
    tol: float = 1e-12
    relax: float = 1.0
    normalize_columns: bool = False

    def __post_init__(self):
        if self.method not in ("sr3", "stlsq"):
            raise ValueError("method must be 'sr3' or 'stlsq'")
        if self.lam < 0 or self.threshold < 0:
            raise ValueError("lam and threshold must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.relax <= 0:
            raise ValueError("relax must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SolverConfig":
        return SolverConfig(**d)


def _column_scales(theta: np.ndarray, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.ones(theta.shape[1])
    scale = np.sqrt(np.mean(theta**2, axis=0))
    scale[scale == 0.0] = 1.0
    return scale


def _design_checks(theta: np.ndarray) -> None:
    m, p = theta.shape
    if m < p:
        warnings.warn(
            f"underdetermined fit: {m} samples for {p} candidate terms",
            RankDeficiencyWarning,
        )
    gram = theta.T @ theta
    sv = np.linalg.svd(gram, compute_uv=False, hermitian=True)
    rank = int(np.sum(sv > sv[0] * max(m, p) * np.finfo(float).eps))
    if rank < min(m, p):
        warnings.warn(
            f"design matrix rank {rank} < {min(m, p)} (duplicate or zero columns?)",
            RankDeficiencyWarning,
        )


def _ridge_solve(theta: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    if lam > 0:
        gram = theta.T @ theta + lam * np.eye(theta.shape[1])
        return np.linalg.solve(gram, theta.T @ y)
    return np.linalg.lstsq(theta, y, rcond=None)[0]


def stlsq_fit(theta: np.ndarray, xdot: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Sequentially thresholded ridge regression.

    Alternates a ridge solve on the active set with hard thresholding
    of coefficients below cfg.threshold until the support is stable.
    """
    theta = np.asarray(theta, dtype=float)
    xdot = np.atleast_2d(np.asarray(xdot, dtype=float))
    _design_checks(theta)
    p = theta.shape[1]
    n = xdot.shape[1]
    scale = _column_scales(theta, cfg.normalize_columns)
    th = theta / scale

    xi = np.zeros((p, n))
    for j in range(n):
        active = np.arange(p)
        w = _ridge_solve(th, xdot[:, j], cfg.lam)
        converged = False
        for _ in range(cfg.max_iter):
            keep = np.abs(w) >= cfg.threshold
            if np.all(keep):
                converged = True
                break
            active = active[keep]
            if active.size == 0:
                w = np.zeros(0)
                converged = True
                break
            w = _ridge_solve(th[:, active], xdot[:, j], cfg.lam)
        if not converged:
            warnings.warn(
                f"stlsq support did not stabilize in {cfg.max_iter} iterations "
                f"for target {j}",
                NonConvergenceWarning,
            )
        xi[active, j] = w
    return xi / scale[:, None]


def sr3_fit(theta: np.ndarray, xdot: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Sparse relaxed regularized regression.

    Alternates the relaxed least-squares solve for the dense
    coefficients W with a hard-threshold proximal update of the sparse
    auxiliary variable, and returns the thresholded matrix.  With
    lam = threshold = 0 the iteration converges to ordinary least
    squares.  Deterministic for fixed inputs.
    """
    theta = np.asarray(theta, dtype=float)
    xdot = np.atleast_2d(np.asarray(xdot, dtype=float))
    _design_checks(theta)
    scale = _column_scales(theta, cfg.normalize_columns)
    th = theta / scale
    nu = cfg.relax

    gram = th.T @ th + np.eye(th.shape[1]) / nu
    chol = cho_factor(gram)
    rhs0 = th.T @ xdot

    w = np.linalg.lstsq(th, xdot, rcond=None)[0]
    u = w.copy()
    converged = False
    for _ in range(cfg.max_iter):
        w = cho_solve(chol, rhs0 + u / nu)
        u_new = np.where(np.abs(w) >= cfg.threshold, w, 0.0)
        if np.max(np.abs(u_new - u)) <= cfg.tol:
            u = u_new
            converged = True
            break
        u = u_new
    if not converged:
        warnings.warn(
            f"sr3 did not converge within {cfg.max_iter} iterations",
            NonConvergenceWarning,
        )
    return u / scale[:, None]


@dataclass
class SparseModel:
    """Identified sparse model: x_dot = Theta(x, u) @ xi_matrix."""

    spec: LibrarySpec
    xi_matrix: np.ndarray
    term_names: list
    state_dim: int = 12
    control_dim: int = 4
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xi_matrix = np.asarray(self.xi_matrix, dtype=float)
        terms = library_terms(self.spec, self.state_dim, self.control_dim)
        if self.xi_matrix.shape != (len(terms), self.state_dim):
            raise ValueError(
                f"coefficient matrix shape {self.xi_matrix.shape} does not match "
                f"{len(terms)} terms x {self.state_dim} states"
            )
        if len(self.term_names) != len(terms):
            raise ValueError("term name list length does not match the library")
        self._terms = terms
        self._refresh_active()

    def _refresh_active(self):
        rows = np.flatnonzero(np.any(self.xi_matrix != 0.0, axis=1))
        self._active_rows = rows
        self._active_terms = [self._terms[i] for i in rows]
        self._active_xi = self.xi_matrix[rows]

    @property
    def n_terms(self) -> int:
        return self.xi_matrix.shape[0]

    def predict(self, x, u) -> np.ndarray:
        """Single-sample derivative prediction."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.state_dim,) or u.shape != (self.control_dim,):
            raise ValueError("prediction input dimensions do not match the model")
        row = _evaluate_terms(self._active_terms, x[None, :], u[None, :])
        return (row @ self._active_xi)[0]

    def predict_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if X.shape[1] != self.state_dim or U.shape[1] != self.control_dim:
            raise ValueError("prediction input dimensions do not match the model")
        cols = _evaluate_terms(self._active_terms, X, U)
        return cols @ self._active_xi

    # MPC model protocol
    def derivative(self, x, u) -> np.ndarray:
        return self.predict(x, u)

    def derivative_batch(self, X, U) -> np.ndarray:
        return self.predict_batch(X, U)

    def to_json(self) -> str:
        return json.dumps(
            {
                "spec": self.spec.to_dict(),
                "terms": list(self.term_names),
                "xi": [[float(v) for v in row] for row in self.xi_matrix],
                "state_dim": self.state_dim,
                "control_dim": self.control_dim,
            }
        )

    @staticmethod
    def from_json(text: str) -> "SparseModel":
        data = json.loads(text)
        spec = LibrarySpec.from_dict(data["spec"])
        state_dim = int(data.get("state_dim", 12))
        control_dim = int(data.get("control_dim", 4))
        terms = library_terms(spec, state_dim, control_dim)
        expected = [
            term_label(t) if state_dim == 12 and control_dim == 4 else _generic_label(t)
            for t in terms
        ]
        if list(data["terms"]) != expected:
            raise ValueError("model term list does not match its library spec")
        return SparseModel(
            spec=spec,
            xi_matrix=np.asarray(data["xi"], dtype=float),
            term_names=list(data["terms"]),
            state_dim=state_dim,
            control_dim=control_dim,
        )


def sindy_predict(model: SparseModel, x, u) -> np.ndarray:
    """Evaluate the identified dynamics on one sample."""
    return model.predict(x, u)


def identify_sindy(data: FlightDataset, spec: LibrarySpec,
                   cfg: SolverConfig) -> SparseModel:
    """Fit a sparse model to a preprocessed dataset.

    Requires the derivative series (run preprocessing first).  The
    returned model carries per-state residual RMSE and sparsity counts
    in its diagnostics.
    """
    if data.derivs is None:
        raise ValueError("dataset has no derivative series; preprocess it first")
    if data.n_samples == 0:
        raise ValueError("dataset is empty")
    X = data.states.values
    U = data.inputs.values
    xdot = data.derivs.values
    theta, labels = build_library(X, U, spec)
    fit = sr3_fit if cfg.method == "sr3" else stlsq_fit
    xi = fit(theta, xdot, cfg)
    residual = theta @ xi - xdot
    diag = {
        "residual_rmse": [float(v) for v in np.sqrt(np.mean(residual**2, axis=0))],
        "nonzero_per_state": [int(v) for v in np.sum(xi != 0.0, axis=0)],
        "nonzero_total": int(np.sum(xi != 0.0)),
        "n_samples": int(X.shape[0]),
        "n_terms": int(theta.shape[1]),
    }
    return SparseModel(
        spec=spec, xi_matrix=xi, term_names=labels, state_dim=X.shape[1],
        control_dim=U.shape[1], diagnostics=diag,
    )
