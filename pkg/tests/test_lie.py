import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from extpose import lie
from extpose.lie import ExtendedPose
from oracles import axis_angle_matrix, expm_series, jac_series

vec3 = arrays(np.float64, 3, elements=st.floats(-1.0, 1.0))
vec9 = arrays(np.float64, 9, elements=st.floats(-0.6, 0.6))


def random_pose(rng, scale=1.0):
    return lie.se23_exp(rng.normal(scale=scale, size=9))


def test_so3_exp_identity_and_quarter_turn():
    assert np.allclose(lie.so3_exp(np.zeros(3)), np.eye(3), atol=0)
    R = lie.so3_exp([0.0, 0.0, math.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_so3_exp_matches_series():
    phi = np.array([0.1, -0.2, 0.3])
    assert np.abs(lie.so3_exp(phi) - expm_series(lie.skew(phi))).max() < 1e-12


def test_so3_log_cases():
    assert np.allclose(lie.so3_log(np.eye(3)), 0, atol=0)
    phi = np.array([0.1, -0.2, 0.3])
    assert np.abs(lie.so3_log(lie.so3_exp(phi)) - phi).max() < 1e-10
    R = axis_angle_matrix([0, 0, 1], 3.0)
    assert np.abs(lie.so3_log(R) - [0, 0, 3.0]).max() < 1e-12


def test_so3_log_rejects_near_pi():
    R = axis_angle_matrix([1, 2, 3], math.pi - 1e-5)
    with pytest.raises(lie.BranchError):
        lie.so3_log(R)
    # just outside the rejected band still works
    R = axis_angle_matrix([1, 2, 3], math.pi - 3e-3)
    assert abs(np.linalg.norm(lie.so3_log(R)) - (math.pi - 3e-3)) < 1e-9


def test_so3_jacobians():
    assert np.allclose(lie.so3_left_jacobian(np.zeros(3)), np.eye(3), atol=0)
    phi = np.array([0.4, 0.1, -0.7])
    assert np.abs(lie.so3_left_jacobian(phi) @ lie.so3_left_jacobian_inv(phi) - np.eye(3)).max() < 1e-10
    phi = np.array([0.1, -0.2, 0.3])
    assert np.abs(lie.so3_left_jacobian(phi) - jac_series(lie.skew(phi))).max() < 1e-12
    with pytest.raises(ValueError):
        lie.so3_left_jacobian_inv([0, 0, 2 * math.pi])


@pytest.mark.parametrize("name", sorted(lie._SERIES))
def test_series_continuity_at_threshold(name):
    th = lie.SERIES_THRESHOLD
    for t in (th * (1 - 1e-3), th, th * (1 + 1e-3)):
        assert abs(lie.coefficient(name, t, threshold=10.0) - lie.coefficient(name, t, threshold=0.0)) < 1e-12


@pytest.mark.parametrize("name", sorted(lie._SERIES))
def test_series_vs_high_precision(name):
    # mpmath-free check: closed forms are accurate at moderate angles
    for t in (0.5, 0.8, 1.5, 3.0):
        assert np.isfinite(lie.coefficient(name, t))
    assert abs(lie.coefficient(name, 1e-9) - lie._SERIES[name][0]) < 1e-15


def test_se23_exp_cases():
    assert lie.se23_exp(np.zeros(9)).allclose(ExtendedPose.identity(), atol=0)
    nu, rho = np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 4.0])
    T = lie.se23_exp(np.concatenate([np.zeros(3), nu, rho]))
    assert T.allclose(ExtendedPose(np.eye(3), nu, rho), atol=0)


def test_se23_exp_matches_series():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xi = rng.uniform(-1, 1, 9) / 2
        assert np.abs(lie.se23_exp(xi).matrix() - expm_series(lie.wedge(xi))).max() < 1e-12


def test_se23_log_cases():
    assert np.allclose(lie.se23_log(ExtendedPose.identity()), 0, atol=0)
    T = ExtendedPose(np.eye(3), [1, 2, 3], [4, 5, 6])
    assert np.allclose(lie.se23_log(T), [0, 0, 0, 1, 2, 3, 4, 5, 6], atol=0)


def test_se23_jacobian_matches_series():
    rng = np.random.default_rng(1)
    for _ in range(20):
        xi = rng.uniform(-1, 1, 9) / 2
        ref = jac_series(lie.curlywedge(xi))
        assert np.abs(lie.se23_left_jacobian(xi) - ref).max() < 1e-12
        ref_r = jac_series(-lie.curlywedge(xi))
        assert np.abs(lie.se23_right_jacobian(xi) - ref_r).max() < 1e-12


def test_se23_jacobian_large_angle_matches_series():
    # closed-form Q-blocks away from the series branch
    xi = np.array([1.2, -0.9, 1.7, 0.3, -2.0, 1.0, 5.0, -1.0, 2.0])
    ref = jac_series(lie.curlywedge(xi), terms=80)
    assert np.abs(lie.se23_left_jacobian(xi) - ref).max() < 1e-10


def test_se23_jacobian_zero_and_inverse():
    assert np.allclose(lie.se23_left_jacobian(np.zeros(9)), np.eye(9), atol=0)
    xi = np.array([0.4, 0.1, -0.7, 1.0, -2.0, 0.5, 3.0, 1.0, -1.0])
    assert np.abs(lie.se23_left_jacobian(xi) @ lie.se23_left_jacobian_inv(xi) - np.eye(9)).max() < 1e-10


def test_bch_first_order_both_sides():
    rng = np.random.default_rng(2)
    for _ in range(50):
        xi = rng.normal(size=9) * 0.7
        eta = rng.normal(size=9)
        eta *= 1e-4 / np.linalg.norm(eta)
        T = lie.se23_exp(xi)
        right = lie.se23_log(T @ lie.se23_exp(eta))
        left = lie.se23_log(lie.se23_exp(eta) @ T)
        assert np.abs(right - xi - lie.se23_right_jacobian_inv(xi) @ eta).max() < 1e-6
        assert np.abs(left - xi - lie.se23_left_jacobian_inv(xi) @ eta).max() < 1e-6


def test_adjoint_identities():
    assert np.allclose(lie.adjoint(ExtendedPose.identity()), np.eye(9), atol=0)
    rng = np.random.default_rng(3)
    for _ in range(50):
        T, G = random_pose(rng), random_pose(rng)
        xi = rng.normal(size=9) * 0.5
        lhs = (T @ lie.se23_exp(xi) @ T.inverse()).matrix()
        assert np.abs(lhs - lie.se23_exp(lie.adjoint(T) @ xi).matrix()).max() < 1e-9
        assert np.abs(lie.adjoint(G) @ lie.adjoint(T) - lie.adjoint(G @ T)).max() < 1e-10
        assert np.abs(lie.adjoint(T.inverse()) - np.linalg.inv(lie.adjoint(T))).max() < 1e-10


def test_curlywedge():
    assert np.allclose(lie.curlywedge(np.zeros(9)), 0, atol=0)
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.normal(size=9), rng.normal(size=9)
        A, B = lie.wedge(a), lie.wedge(b)
        assert np.abs(lie.vee(A @ B - B @ A) - lie.curlywedge(a) @ b).max() < 1e-12
    a = np.concatenate([rng.normal(size=3), np.zeros(6)])
    assert np.allclose(lie.curlywedge(a) @ a, 0, atol=1e-15)


def test_from_matrix_validation():
    with pytest.raises(ValueError):
        ExtendedPose.from_matrix(np.ones((5, 5)))
    T = random_pose(np.random.default_rng(5))
    assert ExtendedPose.from_matrix(T.matrix()).allclose(T, atol=0)


def test_orthonormalize_restores_rotation():
    R = lie.so3_exp([0.3, 0.2, -0.1]) + 1e-6 * np.random.default_rng(6).normal(size=(3, 3))
    lie.check_rotation(lie.orthonormalize(R), tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(vec9)
def test_property_round_trip(xi):
    assert np.abs(lie.se23_log(lie.se23_exp(xi)) - xi).max() < 1e-9


@settings(max_examples=100, deadline=None)
@given(vec9, vec9, vec9)
def test_property_group_axioms(a, b, c):
    A, B, C = lie.se23_exp(a), lie.se23_exp(b), lie.se23_exp(c)
    assert ((A @ B) @ C).allclose(A @ (B @ C), atol=1e-10)
    assert (A.inverse() @ A).allclose(ExtendedPose.identity(), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(vec3)
def test_property_so3_jacobian_inverse(phi):
    assert np.abs(lie.so3_left_jacobian(phi) @ lie.so3_left_jacobian_inv(phi) - np.eye(3)).max() < 1e-10
