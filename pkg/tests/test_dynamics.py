import numpy as np
import pytest

from quadid.dynamics import (
    EulerAngles,
    InertiaParams,
    State12,
    Wrench,
    coriolis_matrix,
    euler_rate_map,
    generalized_accel,
    gravity_vector,
    inertia_matrix,
    rotation_matrix,
    step_rk4,
)
from quadid.errors import DegeneratePitchError, SingularInertiaError

PARAMS = InertiaParams(mass=2.355, ix=0.00546, iy=0.0035, iz=0.00659)


def random_angles(rng, n, max_pitch=1.4):
    out = rng.uniform(-np.pi, np.pi, size=(n, 3))
    out[:, 1] = rng.uniform(-max_pitch, max_pitch, size=n)
    return out


class TestRotationMatrix:
    def test_zero_angles_identity(self):
        r = rotation_matrix(EulerAngles(0.0, 0.0, 0.0))
        np.testing.assert_allclose(r, np.eye(3), atol=1e-15)

    def test_pure_yaw_maps_body_x_to_inertial_y(self):
        r = rotation_matrix(EulerAngles(0.0, 0.0, np.pi / 2))
        np.testing.assert_allclose(r @ np.array([1.0, 0, 0]), [0, 1, 0], atol=1e-15)

    def test_orthonormality_random(self):
        rng = np.random.default_rng(1)
        ang = rng.uniform(-np.pi, np.pi, size=(1000, 3))
        r = rotation_matrix(ang)
        gram = np.einsum("kji,kjl->kil", r, r)
        assert np.max(np.abs(gram - np.eye(3))) < 1e-12
        assert np.max(np.abs(np.linalg.det(r) - 1.0)) < 1e-12


class TestEulerRateMap:
    def test_zero_angles_identity(self):
        np.testing.assert_allclose(
            euler_rate_map(EulerAngles(0, 0, 0)), np.eye(3), atol=1e-15
        )

    def test_degenerate_pitch_rejected(self):
        with pytest.raises(DegeneratePitchError):
            euler_rate_map(EulerAngles(0.0, np.pi / 2 - 1e-9, 0.0))

    def test_inertia_identity(self):
        # M(Omega) must equal W' diag(I) W: the algebraic identity behind
        # the closed-form inertia matrix.
        rng = np.random.default_rng(2)
        ang = random_angles(rng, 500)
        w = euler_rate_map(ang)
        m = inertia_matrix(ang, PARAMS)
        ref = np.einsum("kji,j,kjl->kil", w, PARAMS.inertia_diag, w)
        assert np.max(np.abs(m - ref)) < 1e-12


class TestInertiaMatrix:
    def test_zero_angles_diagonal(self):
        m = inertia_matrix(EulerAngles(0, 0, 0), PARAMS)
        np.testing.assert_allclose(
            m, np.diag([PARAMS.ix, PARAMS.iy, PARAMS.iz]), atol=1e-16
        )

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        m = inertia_matrix(rng.uniform(-np.pi, np.pi, size=(300, 3)), PARAMS)
        assert np.max(np.abs(m - np.swapaxes(m, -1, -2))) < 1e-14

    def test_positive_definite_inside_envelope(self):
        rng = np.random.default_rng(4)
        ang = random_angles(rng, 300, max_pitch=np.pi / 2 - 1e-3)
        m = inertia_matrix(ang, PARAMS)
        assert np.min(np.linalg.eigvalsh(m)) > 0


class TestCoriolisMatrix:
    def test_zero_rates_zero_matrix(self):
        rng = np.random.default_rng(5)
        c = coriolis_matrix(rng.uniform(-1, 1, size=(50, 3)), np.zeros((50, 3)), PARAMS)
        assert np.max(np.abs(c)) == 0.0

    def test_linearity_in_rates(self):
        rng = np.random.default_rng(6)
        ang = random_angles(rng, 100)
        r1 = rng.normal(size=(100, 3))
        r2 = rng.normal(size=(100, 3))
        a, b = 1.7, -0.4
        lhs = coriolis_matrix(ang, a * r1 + b * r2, PARAMS)
        rhs = a * coriolis_matrix(ang, r1, PARAMS) + b * coriolis_matrix(ang, r2, PARAMS)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_equal_inertia_roll_rate_case(self):
        # independent symbolic transcription of the element table
        sympy = pytest.importorskip("sympy")
        phi, th, dphi, dth, dpsi, ix, iy, iz = sympy.symbols(
            "phi th dphi dth dpsi ix iy iz"
        )
        cf, sf = sympy.cos(phi), sympy.sin(phi)
        ct, st = sympy.cos(th), sympy.sin(th)
        table = sympy.Matrix(
            [
                [
                    0,
                    (iy - iz) * (dth * cf * sf + dpsi * sf**2 * ct)
                    + (iz - iy) * (dpsi * cf**2 * ct)
                    - ix * dpsi * ct,
                    (iz - iy) * dpsi * cf * sf * ct**2,
                ],
                [
                    (iz - iy) * (dth * cf * sf + dpsi * sf * ct)
                    + (iy - iz) * (dpsi * cf**2 * ct)
                    + ix * dpsi * ct,
                    (iz - iy) * dphi * cf * sf,
                    -ix * dpsi * st * ct
                    + iy * dpsi * sf**2 * st * ct
                    + iz * dpsi * cf**2 * st * ct,
                ],
                [
                    (iy - iz) * dpsi * ct**2 * sf * cf - ix * dth * ct,
                    (iz - iy) * (dth * cf * sf * st + dphi * sf**2 * ct)
                    + (iy - iz) * dphi * cf**2 * ct
                    + ix * dpsi * st * ct,
                    (iy - iz) * dphi * cf * sf * ct**2
                    - iy * dth * sf**2 * ct * st
                    - iz * dth * cf**2 * ct * st
                    + ix * dth * ct * st,
                ],
            ]
        )
        subs = {ix: 0.004, iy: 0.004, iz: 0.004, phi: 0.3, th: -0.2,
                dphi: 1.0, dth: 0.0, dpsi: 0.0}
        expected = np.array(table.subs(subs).evalf(), dtype=float)
        params = InertiaParams(mass=1.0, ix=0.004, iy=0.004, iz=0.004)
        got = coriolis_matrix(
            np.array([0.3, -0.2, 0.9]), np.array([1.0, 0.0, 0.0]), params
        )
        np.testing.assert_allclose(got, expected, atol=1e-12)
        # with equal inertias the pure roll-rate couplings all cancel
        assert np.max(np.abs(got)) < 1e-15

    def test_symbolic_random_case(self):
        sympy = pytest.importorskip("sympy")
        rng = np.random.default_rng(7)
        vals = {
            "phi": rng.uniform(-1, 1), "th": rng.uniform(-1, 1),
            "dphi": rng.normal(), "dth": rng.normal(), "dpsi": rng.normal(),
            "ix": 0.0054, "iy": 0.0035, "iz": 0.0066,
        }
        phi, th, dphi, dth, dpsi, ix, iy, iz = sympy.symbols(
            "phi th dphi dth dpsi ix iy iz"
        )
        cf, sf = sympy.cos(phi), sympy.sin(phi)
        ct, st = sympy.cos(th), sympy.sin(th)
        c12 = (iy - iz) * (dth * cf * sf + dpsi * sf**2 * ct) \
            + (iz - iy) * (dpsi * cf**2 * ct) - ix * dpsi * ct
        c33 = (iy - iz) * dphi * cf * sf * ct**2 - iy * dth * sf**2 * ct * st \
            - iz * dth * cf**2 * ct * st + ix * dth * ct * st
        sub = {sympy.Symbol(k): v for k, v in vals.items()}
        params = InertiaParams(mass=1.0, ix=vals["ix"], iy=vals["iy"], iz=vals["iz"])
        got = coriolis_matrix(
            np.array([vals["phi"], vals["th"], 0.4]),
            np.array([vals["dphi"], vals["dth"], vals["dpsi"]]),
            params,
        )
        assert abs(got[0, 1] - float(c12.subs(sub))) < 1e-14
        assert abs(got[2, 2] - float(c33.subs(sub))) < 1e-14

    def test_energy_rate_diagnostic_logged_not_asserted(self):
        # d/dt[M] vs 2C skewness defect: recorded for information only;
        # the element table is not the Christoffel construction.
        rng = np.random.default_rng(8)
        ang = rng.uniform(-0.8, 0.8, 3)
        rates = rng.normal(size=3)
        h = 1e-6
        m_plus = inertia_matrix(ang + h * rates, PARAMS)
        m_minus = inertia_matrix(ang - h * rates, PARAMS)
        m_dot = (m_plus - m_minus) / (2 * h)
        c = coriolis_matrix(ang, rates, PARAMS)
        defect = m_dot - 2 * c
        skew_defect = np.max(np.abs(defect + defect.T))
        print(f"Mdot - 2C skew-symmetry defect: {skew_defect:.3e}")
        assert np.all(np.isfinite(defect))


class TestGeneralizedAccel:
    def test_hover_balance(self):
        x = np.zeros(12)
        t = Wrench([0.0, 0.0, PARAMS.mass * PARAMS.g], np.zeros(3))
        np.testing.assert_allclose(generalized_accel(x, t, PARAMS), np.zeros(6),
                                   atol=1e-15)

    def test_free_fall(self):
        x = np.zeros(12)
        acc = generalized_accel(x, Wrench(np.zeros(3), np.zeros(3)), PARAMS)
        np.testing.assert_allclose(acc, [0, 0, -PARAMS.g, 0, 0, 0], atol=1e-15)

    def test_wrench_roundtrip_residual(self):
        rng = np.random.default_rng(9)
        n = 2000
        x = rng.normal(size=(n, 12))
        x[:, 3:6] = random_angles(rng, n)
        force = rng.normal(scale=5.0, size=(n, 3))
        torque = rng.normal(scale=0.2, size=(n, 3))
        acc = generalized_accel(x, np.column_stack([force, torque]), PARAMS)
        # reconstruct the wrench from the solved accelerations
        f_rec = PARAMS.mass * acc[:, 0:3] + gravity_vector(PARAMS)[None, 0:3]
        m = inertia_matrix(x[:, 3:6], PARAMS)
        c = coriolis_matrix(x[:, 3:6], x[:, 9:12], PARAMS)
        t_rec = np.einsum("kij,kj->ki", m, acc[:, 3:6]) + np.einsum(
            "kij,kj->ki", c, x[:, 9:12]
        )
        assert np.max(np.abs(f_rec - force)) < 1e-10
        assert np.max(np.abs(t_rec - torque)) < 1e-10

    def test_singular_inertia_rejected(self):
        x = np.zeros(12)
        x[4] = np.pi / 2  # pitch singularity
        with pytest.raises(SingularInertiaError):
            generalized_accel(x, Wrench(np.zeros(3), np.zeros(3)), PARAMS)


class TestStepRk4:
    def test_hover_state_unchanged(self):
        x0 = State12.from_vector(np.zeros(12))
        t = Wrench([0, 0, PARAMS.mass * PARAMS.g], np.zeros(3))
        x1 = step_rk4(x0, t, PARAMS, 1.0 / 30.0)
        assert np.max(np.abs(x1.as_vector())) < 1e-12

    def test_ballistic_drop(self):
        x = np.zeros(12)
        t = Wrench(np.zeros(3), np.zeros(3))
        dt = 1e-3
        for _ in range(1000):
            x = step_rk4(x, t, PARAMS, dt)
        expected = -0.5 * PARAMS.g
        assert abs(x[2] - expected) / abs(expected) < 1e-6

    def test_dt_validation(self):
        with pytest.raises(ValueError):
            step_rk4(np.zeros(12), Wrench(np.zeros(3), np.zeros(3)), PARAMS, 0.2)

    def test_fourth_order_convergence(self):
        # constant wrench, rotational dynamics still nonlinear in the state
        t = Wrench([0.1, -0.2, PARAMS.mass * PARAMS.g + 0.3],
                   [0.004, -0.003, 0.002])
        x0 = np.zeros(12)
        x0[9:12] = [0.3, -0.2, 0.4]

        def integrate(dt, horizon=0.4):
            x = x0.copy()
            for _ in range(int(round(horizon / dt))):
                x = step_rk4(x, t, PARAMS, dt)
            return x

        ref = integrate(0.4 / 2048)
        err_coarse = np.linalg.norm(integrate(0.4 / 64) - ref)
        err_fine = np.linalg.norm(integrate(0.4 / 128) - ref)
        ratio = err_coarse / err_fine
        assert 12.0 < ratio < 20.0
