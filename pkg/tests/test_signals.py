import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from quadid.errors import TooShortSeriesError
from quadid.signals import (
    CSV_COLUMNS,
    FlightDataset,
    TimeSeries,
    differentiate,
    lowpass,
    preprocess_dataset,
    read_dataset_csv,
    savitzky_golay,
    write_dataset_csv,
)


def series(values, dt=0.01):
    return TimeSeries(t0=0.0, dt=dt, values=np.asarray(values, dtype=float))


class TestLowpass:
    def test_constant_input_fixed_point(self):
        s = series(np.full((200, 2), 3.7))
        out = lowpass(s, 1.0)
        np.testing.assert_allclose(out.values, s.values, atol=1e-14)

    def test_step_response_matches_continuous_form(self):
        # step arrives one sample after the initial condition; one second
        # later the output sits at 1 - e^-1
        dt = 0.01
        u = np.ones((200, 1))
        u[0] = 0.0
        out = lowpass(series(u, dt), 1.0)
        k = 1 + int(round(1.0 / dt))  # one second after step onset
        assert abs(out.values[k, 0] - (1 - np.exp(-1))) < 1e-3

    def test_wideband_tracks_input(self):
        # with lam*dt >> 1 the filter passes the signal through (up to the
        # one-sample hold inherent to the recursion)
        t = np.arange(4000) * 0.01
        u = np.sin(2 * np.pi * 0.05 * t)[:, None]
        out = lowpass(series(u), 1e3)
        assert np.max(np.abs(out.values[5:] - u[5:])) < 0.01 * np.max(np.abs(u))

    def test_stability_any_rate(self):
        for dt, lam in [(1e-4, 1.0), (0.5, 1.0), (0.01, 500.0)]:
            a = np.exp(-lam * dt)
            assert 0 < a < 1

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            lowpass(series(np.zeros((10, 1))), 0.0)


class TestSavitzkyGolay:
    def test_cubic_reproduction(self):
        t = np.arange(100) * 0.02
        vals = (0.3 * t**3 - 1.2 * t**2 + 0.5 * t + 2.0)[:, None]
        out = savitzky_golay(series(vals, 0.02), 7, 3, 0)
        assert np.max(np.abs(out.values - vals)) < 1e-10

    def test_cubic_derivative(self):
        t = np.arange(200) * 0.02
        vals = (0.3 * t**3 - 1.2 * t**2 + 0.5 * t + 2.0)[:, None]
        dvals = (0.9 * t**2 - 2.4 * t + 0.5)[:, None]
        out = savitzky_golay(series(vals, 0.02), 7, 3, 1)
        interior = slice(3, -3)
        assert np.max(np.abs(out.values[interior] - dvals[interior])) < 1e-8

    def test_noise_variance_reduced(self):
        rng = np.random.default_rng(21)
        noise = rng.normal(size=(2000, 1))
        out = savitzky_golay(series(noise), 21, 2, 0)
        assert np.var(out.values) < np.var(noise)

    def test_parameter_validation(self):
        s = series(np.zeros((50, 1)))
        with pytest.raises(ValueError):
            savitzky_golay(s, 8, 3)
        with pytest.raises(ValueError):
            savitzky_golay(s, 7, 7)
        with pytest.raises(ValueError):
            savitzky_golay(s, 7, 3, 4)
        with pytest.raises(TooShortSeriesError):
            savitzky_golay(series(np.zeros((5, 1))), 7, 3)


class TestDifferentiate:
    def test_linear_ramp(self):
        t = np.arange(50) * 0.1
        out = differentiate(series((2.0 * t)[:, None], 0.1))
        np.testing.assert_allclose(out.values, 2.0, atol=1e-12)

    def test_constant_zero(self):
        out = differentiate(series(np.full((50, 3), 4.2), 0.1))
        np.testing.assert_allclose(out.values, 0.0, atol=1e-12)

    def test_sine_derivative(self):
        dt = 1e-3
        t = np.arange(5000) * dt
        out = differentiate(series(np.sin(t)[:, None], dt))
        interior = slice(1, -1)
        assert np.max(np.abs(out.values[interior, 0] - np.cos(t)[interior])) < 1e-6

    def test_too_short(self):
        with pytest.raises(TooShortSeriesError):
            differentiate(series(np.zeros((2, 1))))

    def test_inverts_cumulative_trapezoid(self):
        dt = 0.01
        t = np.arange(500) * dt
        sig = np.sin(1.3 * t) + 0.2 * t
        integ = cumulative_trapezoid(sig, dx=dt, initial=0.0)[:, None]
        out = differentiate(series(integ, dt))
        assert np.max(np.abs(out.values[1:-1, 0] - sig[1:-1])) < 5 * dt**2 * np.max(
            np.abs(sig)
        ) + 1e-4


class TestDatasetCsv:
    def _dataset(self, n=64):
        rng = np.random.default_rng(22)
        states = series(rng.normal(size=(n, 12)), 0.02)
        inputs = TimeSeries(t0=0.0, dt=0.02, values=rng.normal(size=(n, 4)))
        return FlightDataset(states=states, inputs=inputs)

    def test_roundtrip(self, tmp_path):
        ds = self._dataset()
        path = tmp_path / "data.csv"
        write_dataset_csv(path, ds)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        again = read_dataset_csv(path)
        np.testing.assert_allclose(again.states.values, ds.states.values, atol=0)
        np.testing.assert_allclose(again.inputs.values, ds.inputs.values, atol=0)
        assert again.dt == pytest.approx(ds.dt)

    def test_alignment_enforced(self):
        rng = np.random.default_rng(23)
        with pytest.raises(ValueError):
            FlightDataset(
                states=series(rng.normal(size=(10, 12))),
                inputs=series(rng.normal(size=(9, 4))),
            )

    def test_preprocess_attaches_derivatives(self):
        ds = self._dataset(128)
        for method in ("none", "lowpass", "savgol"):
            out = preprocess_dataset(ds, method=method)
            assert out.derivs is not None
            assert out.derivs.n_channels == 12
            assert out.n_samples == ds.n_samples
