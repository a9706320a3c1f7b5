"""Reference trajectories and agreement metrics for tracking experiments."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .signals import TimeSeries


class TrajectoryKind(enum.Enum):
    SINUSOIDAL = "sinusoidal"
    CIRCULAR = "circular"
    SPIRAL = "spiral"

    @staticmethod
    def parse(name: str) -> "TrajectoryKind":
        try:
            return TrajectoryKind(name.lower())
        except ValueError:
            raise ValueError(f"unknown trajectory {name!r}") from None


def reference_position(kind: TrajectoryKind, t, derivatives: bool = False):
    """Closed-form desired position at time t (scalar or array).

    With derivatives=True also returns the analytic velocity and
    acceleration.  Shapes are (..., 3).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("trajectory time must be non-negative")
    zero = np.zeros_like(t)
    if kind is TrajectoryKind.SINUSOIDAL:
        pos = np.stack(
            [4 * np.sin(0.32 * t) + 3, 4 * np.sin(0.64 * t), 2 * np.sin(0.64 * t) + 6],
            axis=-1,
        )
        vel = np.stack(
            [4 * 0.32 * np.cos(0.32 * t), 4 * 0.64 * np.cos(0.64 * t),
             2 * 0.64 * np.cos(0.64 * t)],
            axis=-1,
        )
        acc = np.stack(
            [-4 * 0.32**2 * np.sin(0.32 * t), -4 * 0.64**2 * np.sin(0.64 * t),
             -2 * 0.64**2 * np.sin(0.64 * t)],
            axis=-1,
        )
    elif kind is TrajectoryKind.CIRCULAR:
        pos = np.stack([5 * np.cos(t), 5 * np.sin(t), 6 + zero], axis=-1)
        vel = np.stack([-5 * np.sin(t), 5 * np.cos(t), zero], axis=-1)
        acc = np.stack([-5 * np.cos(t), -5 * np.sin(t), zero], axis=-1)
    elif kind is TrajectoryKind.SPIRAL:
        r = np.exp(0.06 * t)
        ct, st = np.cos(t), np.sin(t)
        pos = np.stack([r * ct, r * st, 0.1 * t + 5], axis=-1)
        vel = np.stack(
            [r * (0.06 * ct - st), r * (0.06 * st + ct), 0.1 + zero], axis=-1
        )
        k = 0.06**2 - 1.0
        acc = np.stack(
            [r * (k * ct - 0.12 * st), r * (k * st + 0.12 * ct), zero], axis=-1
        )
    else:  # pragma: no cover
        raise ValueError(f"unhandled trajectory kind {kind}")
    if derivatives:
        return pos, vel, acc
    return pos


def reference_window(kind: TrajectoryKind, t_start: float, dt: float, n_steps: int,
                     velocity_refs: bool = True, psi_ref: float = 0.0) -> np.ndarray:
    """Stack (n_steps + 1) 12-state references starting at t_start.

    Position channels come from the trajectory; velocity channels carry
    the analytic feedforward when velocity_refs is set; attitude
    references are zero except the configured yaw.
    """
    t = t_start + dt * np.arange(n_steps + 1)
    pos, vel, _ = reference_position(kind, t, derivatives=True)
    refs = np.zeros((n_steps + 1, 12))
    refs[:, 0:3] = pos
    refs[:, 5] = psi_ref
    if velocity_refs:
        refs[:, 6:9] = vel
    return refs


def _as_matrix(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    out = np.asarray(series, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    return out


def _check_aligned(pred: np.ndarray, ref: np.ndarray) -> None:
    if pred.shape != ref.shape:
        raise ValueError(f"series shapes differ: {pred.shape} vs {ref.shape}")
    if pred.shape[0] == 0:
        raise ValueError("series are empty")


def rmse(pred, ref) -> tuple[np.ndarray, float]:
    """Root-mean-square error per channel plus the stacked aggregate."""
    p, r = _as_matrix(pred), _as_matrix(ref)
    _check_aligned(p, r)
    err = p - r
    per = np.sqrt(np.mean(err**2, axis=0))
    agg = float(np.sqrt(np.mean(err**2)))
    return per, agg


def mae(pred, ref) -> tuple[np.ndarray, float]:
    """Mean absolute error per channel plus the stacked aggregate."""
    p, r = _as_matrix(pred), _as_matrix(ref)
    _check_aligned(p, r)
    err = np.abs(p - r)
    return np.mean(err, axis=0), float(np.mean(err))


def _willmott(p: np.ndarray, r: np.ndarray) -> float:
    rbar = np.mean(r)
    num = np.sum((p - r) ** 2)
    den = np.sum((np.abs(p - rbar) + np.abs(r - rbar)) ** 2)
    if den == 0.0:
        # both series constant and identical
        return 1.0
    return float(1.0 - num / den)


def _lin_ccc(p: np.ndarray, r: np.ndarray) -> float:
    pm, rm = np.mean(p), np.mean(r)
    pv, rv = np.var(p), np.var(r)
    cov = np.mean((p - pm) * (r - rm))
    den = pv + rv + (pm - rm) ** 2
    if den == 0.0:
        return 1.0
    return float(2.0 * cov / den)


def concordance_index(pred, ref, method: str = "willmott") -> tuple[np.ndarray, float]:
    """Agreement index in [0, 1]: 1 for perfect prediction.

    Default is Willmott's index of agreement
    d = 1 - sum((p - r)^2) / sum((|p - rbar| + |r - rbar|)^2);
    method "lin" switches to Lin's concordance correlation coefficient
    for sensitivity checks.
    """
    p, r = _as_matrix(pred), _as_matrix(ref)
    _check_aligned(p, r)
    fn = {"willmott": _willmott, "lin": _lin_ccc}.get(method)
    if fn is None:
        raise ValueError(f"unknown concordance method {method!r}")
    per = np.array([fn(p[:, j], r[:, j]) for j in range(p.shape[1])])
    agg = fn(p.ravel(), r.ravel())
    return per, agg


@dataclass
class MetricReport:
    """Per-channel and aggregate RMSE / MAE / concordance."""

    channel_names: list
    rmse_per: np.ndarray
    rmse_agg: float
    mae_per: np.ndarray
    mae_agg: float
    concordance_per: np.ndarray
    concordance_agg: float
    extra: dict = field(default_factory=dict)

    @staticmethod
    def compute(pred, ref, channel_names=None,
                concordance_method: str = "willmott") -> "MetricReport":
        p = _as_matrix(pred)
        names = channel_names or [f"ch{j}" for j in range(p.shape[1])]
        r_per, r_agg = rmse(pred, ref)
        m_per, m_agg = mae(pred, ref)
        c_per, c_agg = concordance_index(pred, ref, concordance_method)
        return MetricReport(list(names), r_per, r_agg, m_per, m_agg, c_per, c_agg)

    def to_dict(self) -> dict:
        out = {
            "channels": {
                name: {
                    "rmse": float(self.rmse_per[j]),
                    "mae": float(self.mae_per[j]),
                    "concordance": float(self.concordance_per[j]),
                }
                for j, name in enumerate(self.channel_names)
            },
            "aggregate": {
                "rmse": float(self.rmse_agg),
                "mae": float(self.mae_agg),
                "concordance": float(self.concordance_agg),
            },
        }
        out.update(self.extra)
        return out

    def to_text(self) -> str:
        width = max(9, max(len(n) for n in self.channel_names) + 1)
        lines = [
            f"{'channel':<{width}} {'RMSE':>12} {'MAE':>12} {'Concordance':>12}"
        ]
        for j, name in enumerate(self.channel_names):
            lines.append(
                f"{name:<{width}} {self.rmse_per[j]:>12.6f} "
                f"{self.mae_per[j]:>12.6f} {self.concordance_per[j]:>12.4f}"
            )
        lines.append(
            f"{'all':<{width}} {self.rmse_agg:>12.6f} "
            f"{self.mae_agg:>12.6f} {self.concordance_agg:>12.4f}"
        )
        return "\n".join(lines)


def position_rmse_3d(pred_pos: np.ndarray, ref_pos: np.ndarray) -> float:
    """sqrt(mean ||error||^2) over 3-D position samples."""
    err = np.asarray(pred_pos, float) - np.asarray(ref_pos, float)
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def position_mae_3d(pred_pos: np.ndarray, ref_pos: np.ndarray) -> float:
    """mean ||error|| over 3-D position samples."""
    err = np.asarray(pred_pos, float) - np.asarray(ref_pos, float)
    return float(np.mean(np.linalg.norm(err, axis=1)))
