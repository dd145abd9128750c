import numpy as np
import pytest

from extpose import imu, lie
from extpose.imu import ImuBias, ImuNoiseSpec, ImuSample
from extpose.lie import ExtendedPose
from oracles import rk4


def random_sample(rng, dt=None):
    dt = rng.uniform(0.005, 0.2) if dt is None else dt
    return ImuSample(rng.normal(scale=1.0, size=3), rng.normal(scale=5.0, size=3), dt)


def test_phi_map():
    assert imu.phi_map(ExtendedPose.identity(), 3.0).allclose(ExtendedPose.identity(), atol=0)
    T = imu.phi_map(ExtendedPose(np.eye(3), [1, 0, 0], [0, 0, 0]), 2.0)
    assert np.allclose(T.p, [2, 0, 0], atol=0)


def test_phi_is_automorphism_and_f_matrix():
    rng = np.random.default_rng(0)
    A, B = lie.se23_exp(rng.normal(size=9)), lie.se23_exp(rng.normal(size=9))
    t = 0.7
    assert imu.phi_map(A @ B, t).allclose(imu.phi_map(A, t) @ imu.phi_map(B, t), atol=1e-10)
    xi = rng.normal(size=9)
    assert imu.phi_map(A @ lie.se23_exp(xi), t).allclose(
        imu.phi_map(A, t) @ lie.se23_exp(imu.f_matrix(t) @ xi), atol=1e-10)
    xi = rng.normal(size=9)
    assert imu.phi_map(lie.se23_exp(xi), 0.05).allclose(lie.se23_exp(imu.f_matrix(0.05) @ xi), atol=1e-10)
    assert np.array_equal(imu.f_matrix(0.0), np.eye(9))
    assert np.allclose(imu.f_matrix(0.2) @ imu.f_matrix(0.3), imu.f_matrix(0.5), atol=1e-15)


def test_gamma_flat():
    assert imu.gamma_flat(imu.DEFAULT_GRAVITY, 0.0).allclose(ExtendedPose.identity(), atol=0)
    G = imu.gamma_flat(imu.DEFAULT_GRAVITY, 1.0)
    assert np.allclose(G.v, [0, 0, -9.81]) and np.allclose(G.p, [0, 0, -4.905])


def test_gamma_composition():
    # Gamma_{t+s} = Gamma_t Phi_s(Gamma_s)... applied as Gamma_{ij} = Gamma_{i(j-1)} Phi(Gamma_j)
    g = np.array([0.1, -0.3, -9.81])
    acc = imu.gamma_flat(g, 0.0)
    for k in range(7):
        acc = imu.gamma_flat(g, 0.1) @ imu.phi_map(acc, 0.1)
    assert acc.allclose(imu.gamma_flat(g, 0.7), atol=1e-12)


def test_one_step_upsilon_cases():
    s = ImuSample(np.zeros(3), np.zeros(3), 0.1)
    assert imu.one_step_upsilon(s).allclose(ExtendedPose.identity(), atol=0)
    a_bar = np.array([1.0, 0.0, 9.81]) - imu.DEFAULT_GRAVITY
    U = imu.one_step_upsilon(ImuSample(np.zeros(3), a_bar, 0.05))
    assert np.allclose(U.v, 0.05 * a_bar, atol=1e-15)
    assert np.allclose(U.p, 0.00125 * a_bar, atol=1e-15)


def test_bias_equals_shifted_reading():
    rng = np.random.default_rng(1)
    s = random_sample(rng)
    b = ImuBias(rng.normal(size=3), rng.normal(size=3))
    shifted = ImuSample(s.omega_m - b.gyro, s.acc_m - b.acc, s.dt)
    for scheme in imu.SCHEMES:
        assert imu.one_step_upsilon(s, b, scheme).allclose(imu.one_step_upsilon(shifted, scheme=scheme), atol=1e-14)


def test_g_at_zero_rate():
    dt = 0.1
    G = imu.noise_jacobian_g(ImuSample(np.zeros(3), [1.0, 2.0, 3.0], dt))
    ref = np.zeros((9, 6))
    ref[0:3, 0:3] = ref[3:6, 3:6] = -dt * np.eye(3)
    ref[6:9, 3:6] = -dt**2 / 2 * np.eye(3)
    assert np.allclose(G, ref, atol=1e-15)


@pytest.mark.parametrize("scheme", imu.SCHEMES)
def test_g_finite_differences(scheme):
    rng = np.random.default_rng(2)
    for _ in range(100):
        s = random_sample(rng)
        b = ImuBias(rng.normal(scale=0.1, size=3), rng.normal(scale=0.1, size=3))
        G = imu.noise_jacobian_g(s, b, scheme)
        U = imu.one_step_upsilon(s, b, scheme)
        d = rng.normal(size=6)
        d *= 1e-4 / np.linalg.norm(d)
        xi = lie.se23_log(U.inverse() @ imu.one_step_upsilon(s, b + d, scheme))
        assert np.abs(xi - G @ d).max() < 1e-6
        # halving the perturbation quarters the discrepancy
        xi2 = lie.se23_log(U.inverse() @ imu.one_step_upsilon(s, b + d / 2, scheme))
        e1, e2 = np.linalg.norm(xi - G @ d), np.linalg.norm(xi2 - G @ d / 2)
        if e1 > 1e-12:
            assert 3.0 < e1 / e2 < 5.0


def test_step_noise_cov_psd():
    rng = np.random.default_rng(3)
    meas, _ = imu.discretize_noise(ImuNoiseSpec.isotropic(7e-4, 1.9e-2), 0.01)
    for _ in range(20):
        Q = imu.step_noise_cov(random_sample(rng), ImuBias(), meas)
        assert np.linalg.eigvalsh(Q).min() > -1e-18


def test_discretize_noise():
    spec = ImuNoiseSpec.isotropic(0.3, 0.4, 0.01, 0.02)
    meas, rw = imu.discretize_noise(spec, 1.0)
    assert np.allclose(np.diag(meas), [0.09] * 3 + [0.16] * 3)
    meas, _ = imu.discretize_noise(ImuNoiseSpec.isotropic(**imu.NAV_GRADE_IMU), 0.01)
    assert np.isclose(meas[0, 0], 9.4e-6**2 / 0.01, rtol=1e-14)
    meas, rw = imu.discretize_noise(ImuNoiseSpec.isotropic(7e-4, 1.9e-2, 4e-4, 1.2e-2), 0.1)
    assert np.isclose(meas[1, 1], 4.9e-6, rtol=1e-12)
    assert np.isclose(rw[0, 0], 4e-4**2 * 0.1, rtol=1e-12)
    with pytest.raises(ValueError):
        imu.discretize_noise(spec, 0.0)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        ImuNoiseSpec(-np.eye(3), np.eye(3), np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        ImuSample(np.zeros(3), np.zeros(3), 0.0)


def _continuous_rhs(signal, g):
    # state: R (9), v (3), p (3)
    def f(t, y):
        R = y[:9].reshape(3, 3)
        w, a = signal(t)
        return np.concatenate([(R @ lie.skew(w)).ravel(), R @ a + g, y[9:12]])
    return f


def test_piecewise_constant_global_accel_is_exact():
    # within each step the body rate is constant and the specific force
    # counter-rotates, so R(t) a(t) is constant and the Euler increment is exact
    rng = np.random.default_rng(4)
    dt, n = 0.05, 20
    ws = rng.normal(scale=0.5, size=(n, 3))
    accs = rng.normal(scale=2.0, size=(n, 3))
    g = imu.DEFAULT_GRAVITY

    def signal_for(k):
        return lambda t: (ws[k], lie.so3_exp(-ws[k] * (t - k * dt)) @ accs[k])

    T = ExtendedPose(lie.so3_exp([0.1, 0.2, 0.3]), [1.0, 0.0, 0.5], [0.0, 2.0, 0.0])
    y = np.concatenate([T.R.ravel(), T.v, T.p])
    for k in range(n):
        y = rk4(_continuous_rhs(signal_for(k), g), y, k * dt, (k + 1) * dt, dt / 50)
        T = imu.integrate_step(T, ImuSample(ws[k], accs[k], dt), g=g)
    assert np.abs(y[:9] - T.R.ravel()).max() < 1e-9
    assert np.abs(y[9:12] - T.v).max() < 1e-9
    assert np.abs(y[12:] - T.p).max() < 1e-9


def test_midpoint_minus_euler_is_second_order():
    rng = np.random.default_rng(5)
    w, a = rng.normal(size=3), rng.normal(scale=3, size=3)
    diffs = []
    for dt in (0.02, 0.01, 0.005):
        s = ImuSample(w, a, dt)
        e = imu.one_step_upsilon(s, scheme=imu.EULER)
        m = imu.one_step_upsilon(s, scheme=imu.MIDPOINT)
        diffs.append(np.linalg.norm(e.v - m.v))
    assert 3.8 < diffs[0] / diffs[1] < 4.2
    assert 3.8 < diffs[1] / diffs[2] < 4.2
