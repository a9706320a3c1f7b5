"""Time-series containers, smoothing and numerical differentiation.

Datasets are uniformly sampled.  The flight CSV layout is one row per
sample: t, 12 state channels, 4 input channels (see STATE_COLUMNS and
INPUT_COLUMNS).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import savgol_filter

from .errors import TooShortSeriesError

STATE_COLUMNS = [
    "eta_x", "eta_y", "eta_z",
    "phi", "theta", "psi",
    "deta_x", "deta_y", "deta_z",
    "dphi", "dtheta", "dpsi",
]
INPUT_COLUMNS = ["vz_d", "phi_d", "theta_d", "dpsi_d"]
CSV_COLUMNS = ["t"] + STATE_COLUMNS + INPUT_COLUMNS


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled multichannel series; values is (n_samples, n_channels)."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)


@dataclass(frozen=True)
class FlightDataset:
    """States (12 ch), inputs (4 ch) and, once computed, derivatives (12 ch)."""

    states: TimeSeries
    inputs: TimeSeries
    derivs: TimeSeries | None = None

    def __post_init__(self):
        members = [self.states, self.inputs] + ([self.derivs] if self.derivs else [])
        if self.states.n_channels != 12 or self.inputs.n_channels != 4:
            raise ValueError("dataset needs 12 state channels and 4 input channels")
        if self.derivs is not None and self.derivs.n_channels != 12:
            raise ValueError("derivative series needs 12 channels")
        n = {m.n_samples for m in members}
        dt = {m.dt for m in members}
        if len(n) != 1 or len(dt) != 1:
            raise ValueError("dataset members must share length and dt")

    @property
    def n_samples(self) -> int:
        return self.states.n_samples

    @property
    def dt(self) -> float:
        return self.states.dt


def lowpass(series: TimeSeries, lam: float) -> TimeSeries:
    """Causal first-order low pass with continuous-time pole at -lam.

    Exact zero-order-hold discretization: y[k+1] = a y[k] + (1-a) u[k]
    with a = exp(-lam dt) and y[0] = u[0].  Unit DC gain, stable for
    any dt, lam > 0.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    a = np.exp(-lam * series.dt)
    u = series.values
    y = np.empty_like(u)
    y[0] = u[0]
    for k in range(u.shape[0] - 1):
        y[k + 1] = a * y[k] + (1.0 - a) * u[k]
    return replace(series, values=y)


def savitzky_golay(series: TimeSeries, window: int, poly_order: int,
                   deriv_order: int = 0) -> TimeSeries:
    """Per-channel Savitzky-Golay smoothing / differentiation.

    Edge samples come from the polynomial fitted to the one-sided end
    window, keeping the series length unchanged.
    """
    if window % 2 != 1 or window < 3:
        raise ValueError("window must be an odd integer >= 3")
    if poly_order >= window:
        raise ValueError("poly_order must be smaller than window")
    if deriv_order > poly_order:
        raise ValueError("deriv_order must not exceed poly_order")
    if series.n_samples < window:
        raise TooShortSeriesError(
            f"series has {series.n_samples} samples, window needs {window}"
        )
    out = savgol_filter(
        series.values, window, poly_order,
        deriv=deriv_order, delta=series.dt, axis=0, mode="interp",
    )
    return replace(series, values=out)


def differentiate(series: TimeSeries) -> TimeSeries:
    """Second-order finite differences: central interior, one-sided edges."""
    if series.n_samples < 3:
        raise TooShortSeriesError("differentiation needs at least 3 samples")
    out = np.gradient(series.values, series.dt, axis=0, edge_order=2)
    return replace(series, values=out)


def preprocess_dataset(ds: FlightDataset, method: str = "savgol",
                       lowpass_lambda: float = 1.0,
                       savgol_window: int = 11,
                       savgol_poly: int = 3) -> FlightDataset:
    """Smooth states/inputs and attach the state-derivative series.

    method "none" differentiates the raw states; "lowpass" filters both
    measurement and command channels with the same first-order filter;
    "savgol" smooths both and takes the derivative from the fitted
    polynomials directly.
    """
    if method == "none":
        states, inputs = ds.states, ds.inputs
        derivs = differentiate(states)
    elif method == "lowpass":
        states = lowpass(ds.states, lowpass_lambda)
        inputs = lowpass(ds.inputs, lowpass_lambda)
        derivs = differentiate(states)
    elif method == "savgol":
        states = savitzky_golay(ds.states, savgol_window, savgol_poly, 0)
        inputs = savitzky_golay(ds.inputs, savgol_window, savgol_poly, 0)
        derivs = savitzky_golay(ds.states, savgol_window, savgol_poly, 1)
    else:
        raise ValueError(f"unknown preprocessing method {method!r}")
    return FlightDataset(states=states, inputs=inputs, derivs=derivs)


def write_dataset_csv(path, ds: FlightDataset) -> None:
    """Write t + states + inputs as CSV with full float precision."""
    table = np.column_stack([ds.states.times, ds.states.values, ds.inputs.values])
    header = ",".join(CSV_COLUMNS)
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def read_dataset_csv(path) -> FlightDataset:
    """Read a flight CSV; derivatives are left for preprocessing."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = table[:, 0]
    if len(t) < 2:
        raise TooShortSeriesError("dataset needs at least 2 samples")
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=0, atol=1e-9 * max(dt, 1.0)):
        raise ValueError("dataset is not uniformly sampled")
    states = TimeSeries(t0=float(t[0]), dt=dt, values=table[:, 1:13])
    inputs = TimeSeries(t0=float(t[0]), dt=dt, values=table[:, 13:17])
    return FlightDataset(states=states, inputs=inputs)
