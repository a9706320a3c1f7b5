import numpy as np
import pytest

from quadid.dynamics import InertiaParams, coriolis_matrix, inertia_matrix
from quadid.errors import SingularMatrixError
from quadid.pd_model import (
    ControlInput,
    DEFAULT_GRAVITY,
    DEFAULT_XI,
    PdGains,
    PdModel,
    PdParams,
    build_s_matrices,
    embed_input,
    expanded_rotation,
    extract_gain_entries,
    gains_to_xi,
    pd_closed_loop_accel,
    pd_derivative,
    pd_wrench,
    pd_wrench_matrix,
)

MASS = 2.355
GAINS = PdGains(
    kp_z=0.7, kd_z=0.12, kp_phi=0.5, kd_phi=0.08,
    kp_theta=0.45, kd_theta=0.09, kp_psi=0.6, kd_psi=0.05,
)
INERTIA = InertiaParams(mass=MASS, ix=0.00546, iy=0.0035, iz=0.00659)


def random_states(rng, n):
    x = rng.normal(scale=1.0, size=(n, 12))
    x[:, 3:5] = rng.uniform(-1.2, 1.2, size=(n, 2))
    x[:, 5] = rng.uniform(-np.pi, np.pi, size=n)
    return x


def random_inputs(rng, n):
    u = rng.uniform(-1, 1, size=(n, 4))
    return u * np.array([4.0, 0.5, 0.5, 2.0])


class TestControlInput:
    def test_bounds_enforced(self):
        ControlInput(5.0, 0.611, -0.611, 5 * np.pi / 6)
        with pytest.raises(ValueError):
            ControlInput(5.1, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            ControlInput(0.0, 0.7, 0.0, 0.0)
        with pytest.raises(ValueError):
            ControlInput(0.0, 0.0, 0.0, -3.0)

    def test_embedding(self):
        u = ControlInput(1.0, 0.1, -0.2, 0.5)
        np.testing.assert_array_equal(embed_input(u), [0, 0, 1.0, 0.1, -0.2, 0.5])


class TestSMatrices:
    def test_stock_placement(self):
        sm = build_s_matrices(PdParams(DEFAULT_XI))
        np.testing.assert_allclose(
            np.diag(sm.s1), [0, 0, 0.6756, 1.0, 0.6344, 1.0]
        )
        np.testing.assert_allclose(np.diag(sm.s2), [0, 0, 0, 0.408, 1.0, 0])
        np.testing.assert_allclose(np.diag(sm.s4), [0, 0, -0.8109, 0, 0, 1.0])
        np.testing.assert_allclose(sm.s5, [0, 0, 0.3984, 0, 0, 0])

    def test_zero_xi_zero_matrices(self):
        xi = np.zeros(16)
        xi[13:16] = 1e-3  # inertias must stay positive
        sm = build_s_matrices(PdParams(xi))
        for mat in (sm.s1, sm.s2, sm.s3, sm.s4):
            assert np.all(mat == 0)
        assert np.all(sm.s5 == 0)

    def test_roundtrip_bijection(self):
        rng = np.random.default_rng(10)
        xi = rng.normal(size=16)
        xi[13:16] = np.abs(xi[13:16]) + 1e-3
        params = PdParams(xi)
        got = extract_gain_entries(build_s_matrices(params))
        np.testing.assert_array_equal(got, xi[0:13])


class TestPdWrench:
    def test_hover(self):
        w = pd_wrench(np.zeros(12), np.zeros(4), INERTIA, GAINS)
        np.testing.assert_allclose(w.force, [0, 0, MASS * DEFAULT_GRAVITY], atol=1e-14)
        np.testing.assert_allclose(w.torque, np.zeros(3), atol=1e-14)

    def test_pure_roll_command(self):
        u = np.array([0.0, 0.1, 0.0, 0.0])
        w = pd_wrench(np.zeros(12), u, INERTIA, GAINS)
        np.testing.assert_allclose(
            w.torque, [GAINS.kp_phi * 0.1, 0.0, 0.0], atol=1e-15
        )

    def test_matrix_form_equivalence(self):
        # the gain form and the placement-mapped matrix form must agree
        rng = np.random.default_rng(11)
        xi = gains_to_xi(GAINS, MASS, DEFAULT_GRAVITY,
                         (INERTIA.ix, INERTIA.iy, INERTIA.iz))
        for _ in range(200):
            x = random_states(rng, 1)[0]
            u = random_inputs(rng, 1)[0]
            accel = rng.normal(size=6)
            wa = pd_wrench(x, u, INERTIA, GAINS, accel).as_vector()
            wb = pd_wrench_matrix(x, u, xi, accel).as_vector()
            assert np.max(np.abs(wa - wb)) < 1e-12


class TestExpandedRotation:
    def test_zero_angles_identity(self):
        np.testing.assert_allclose(expanded_rotation(np.zeros(3)), np.eye(6),
                                   atol=1e-15)

    def test_blocks(self):
        from quadid.dynamics import rotation_matrix

        rng = np.random.default_rng(12)
        ang = rng.uniform(-1, 1, 3)
        rbar = expanded_rotation(ang)
        np.testing.assert_allclose(rbar[0:3, 0:3], rotation_matrix(ang), atol=1e-15)
        np.testing.assert_allclose(rbar[3:6, 3:6], np.eye(3), atol=1e-15)
        assert np.all(rbar[0:3, 3:6] == 0) and np.all(rbar[3:6, 0:3] == 0)


class TestClosedLoopAccel:
    def test_constructed_equilibrium(self):
        xi = DEFAULT_XI.copy()
        mass = 0.05
        xi[12] = mass * DEFAULT_GRAVITY  # force offset cancels weight at rest
        acc = pd_closed_loop_accel(np.zeros(12), np.zeros(4), PdParams(xi), mass)
        np.testing.assert_allclose(acc, np.zeros(6), atol=1e-14)

    def test_dense_solve_oracle(self):
        # independent path: assemble the full 6x6 system and solve densely
        rng = np.random.default_rng(13)
        params = PdParams(DEFAULT_XI)
        mass = 0.0406
        for _ in range(100):
            x = random_states(rng, 1)[0]
            u = random_inputs(rng, 1)[0]
            got = pd_closed_loop_accel(x, u, params, mass)

            sm = build_s_matrices(params)
            rbar = expanded_rotation(x[3:6])
            coupling = np.zeros((6, 6))
            coupling[0:3, 0:3] = mass * np.eye(3)
            inert = params.inertia_params(mass)
            coupling[3:6, 3:6] = inertia_matrix(x[3:6], inert)
            coupling += rbar @ sm.s4
            cbar = np.zeros((6, 6))
            cbar[3:6, 3:6] = coriolis_matrix(x[3:6], x[9:12], inert)
            gbar = np.array([0, 0, mass * DEFAULT_GRAVITY, 0, 0, 0])
            rhs = rbar @ (
                sm.s1 @ embed_input(u) - sm.s2 @ x[0:6] - sm.s3 @ x[6:12] + sm.s5
            )
            rhs = rhs - cbar @ x[6:12] - gbar
            expected = np.linalg.solve(coupling, rhs)
            assert np.max(np.abs(got - expected)) < 1e-10

    def test_affine_in_input(self):
        rng = np.random.default_rng(14)
        params = PdParams(DEFAULT_XI)
        x = np.zeros(12)
        base = pd_closed_loop_accel(x, np.zeros(4), params, 0.0406)
        u1 = np.array([0.0, 0.2, 0.0, 0.0])
        a1 = pd_closed_loop_accel(x, u1, params, 0.0406)
        a2 = pd_closed_loop_accel(x, 2 * u1, params, 0.0406)
        np.testing.assert_allclose(a2 - base, 2 * (a1 - base), atol=1e-12)

    def test_singular_coupling_rejected(self):
        # mass + xi11 * R33 -> 0 makes the vertical channel singular
        xi = DEFAULT_XI.copy()
        xi[10] = -1.0
        with pytest.raises(SingularMatrixError):
            pd_closed_loop_accel(np.zeros(12), np.zeros(4), PdParams(xi), 1.0)


class TestPdDerivative:
    def test_velocity_passthrough(self):
        rng = np.random.default_rng(15)
        x = random_states(rng, 1)[0]
        d = pd_derivative(x, np.zeros(4), PdParams(DEFAULT_XI), 0.0406)
        np.testing.assert_array_equal(d[0:6], x[6:12])

    def test_equilibrium_rest(self):
        xi = DEFAULT_XI.copy()
        mass = 0.05
        xi[12] = mass * DEFAULT_GRAVITY
        d = pd_derivative(np.zeros(12), np.zeros(4), PdParams(xi), mass)
        np.testing.assert_allclose(d, np.zeros(12), atol=1e-14)

    def test_scalar_and_batch_paths_agree(self):
        rng = np.random.default_rng(16)
        model = PdModel(PdParams(DEFAULT_XI), 0.0406)
        X = random_states(rng, 300)
        U = random_inputs(rng, 300)
        batch = model.derivative_batch(X, U)
        ref = np.stack([pd_derivative(x, u, model.params, model.mass)
                       for x, u in zip(X, U)])
        scal = np.stack([model.derivative(x, u) for x, u in zip(X, U)])
        assert np.max(np.abs(batch - ref)) < 1e-12
        assert np.max(np.abs(scal - ref)) < 1e-12

    def test_fd_jacobians_consistent(self):
        # central differences through the scalar and the vectorized paths
        # must produce the same Jacobians
        rng = np.random.default_rng(17)
        model = PdModel(PdParams(DEFAULT_XI), 0.0406)
        x = random_states(rng, 1)[0]
        u = random_inputs(rng, 1)[0]

        def jac(f, v, n_out, h):
            out = np.empty((n_out, len(v)))
            for i in range(len(v)):
                vp, vm = v.copy(), v.copy()
                vp[i] += h
                vm[i] -= h
                out[:, i] = (f(vp) - f(vm)) / (2 * h)
            return out

        h = 1e-6
        jx_scalar = jac(lambda xv: model.derivative(xv, u), x, 12, h)
        jx_batch = jac(lambda xv: model.derivative_batch(xv[None], u[None])[0], x, 12, h)
        ju_scalar = jac(lambda uv: model.derivative(x, uv), u, 12, h)
        ju_batch = jac(lambda uv: model.derivative_batch(x[None], uv[None])[0], u, 12, h)
        scale_x = np.max(np.abs(jx_scalar))
        scale_u = np.max(np.abs(ju_scalar))
        assert np.max(np.abs(jx_scalar - jx_batch)) / scale_x < 1e-5
        assert np.max(np.abs(ju_scalar - ju_batch)) / scale_u < 1e-5

    def test_stock_profile_attitude_smoke(self):
        # 10 s of bounded commands: pitch must stay well inside +/- pi/2
        from quadid.config import STOCK_MASS

        model = PdModel(PdParams(DEFAULT_XI), STOCK_MASS)
        x = np.zeros(12)
        dt = 2e-3
        for k in range(int(10.0 / dt)):
            t = k * dt
            u = np.array(
                [1.0 * np.sin(0.8 * t), 0.3 * np.sin(1.1 * t),
                 0.3 * np.sin(0.9 * t + 1.0), 0.5 * np.sin(0.6 * t)]
            )
            d = model.derivative(x, u)
            x = x + dt * d
        assert np.all(np.isfinite(x))
        assert abs(x[4]) < np.pi / 2


class TestSerialization:
    def test_params_json_roundtrip(self):
        params = PdParams(DEFAULT_XI)
        again = PdParams.from_json(params.to_json())
        np.testing.assert_array_equal(again.xi, params.xi)
