"""Flat-Earth IMU preintegration with SE_2(3) uncertainty.

Between keyframes ``i`` and ``j`` the IMU readings are summarized by the
increment ``Upsilon_ij`` such that

    T_j = Gamma_{dt_ij} Phi_{dt_ij}(T_i) Upsilon_ij,
    Upsilon_ij = Upsilon_hat_ij exp(eta_ij),  eta_ij ~ N(0, Sigma_ij).

The increment, its covariance and its bias Jacobian are accumulated one IMU
sample at a time. A per-component (rotation, velocity, position) variant of
the covariance and bias Jacobian is included for comparison; it describes the
same increment with the rotation-times-vector uncertainty.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from extpose.imu import (
    DEFAULT_GRAVITY,
    EULER,
    ImuBias,
    ImuSample,
    f_matrix,
    gamma_flat,
    noise_jacobian_g,
    one_step_upsilon,
    phi_map,
)
from extpose.lie import ExtendedPose, adjoint, se23_exp, se23_log, skew, so3_exp
from extpose.uncertainty import SE23, SE3xR3, SO3xR6

CHOL_JITTER = 1e-12


@dataclass(frozen=True, eq=False)
class PreintegratedDelta:
    """Preintegrated IMU increment between two keyframes.

    Attributes:
        upsilon: the increment estimate (Delta R, Delta v, Delta p).
        cov: 9x9 covariance of ``eta_ij`` in SE_2(3) exponential coordinates.
        bias_jacobian: 9x6 derivative of ``upsilon`` (right perturbation)
            with respect to (gyro, acc) bias.
        dt_total: integrated time in seconds.
        bias_ref: bias the readings were corrected with.
        steps: number of integrated samples.
        meas_cov: 6x6 discrete (gyro, acc) measurement covariance.
        scheme: one-step integration scheme.
    """

    upsilon: ExtendedPose
    cov: np.ndarray
    bias_jacobian: np.ndarray
    dt_total: float
    bias_ref: ImuBias
    steps: int = 0
    meas_cov: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    scheme: str = EULER


def preint_init(bias_ref: ImuBias = ImuBias(), meas_cov=None, scheme: str = EULER) -> PreintegratedDelta:
    meas_cov = np.zeros((6, 6)) if meas_cov is None else np.asarray(meas_cov, dtype=float).reshape(6, 6)
    return PreintegratedDelta(ExtendedPose.identity(), np.zeros((9, 9)), np.zeros((9, 6)), 0.0, bias_ref, 0,
                              meas_cov, scheme)


def step_matrices(sample: ImuSample, bias: ImuBias = ImuBias(), scheme: str = EULER):
    """One-step increment ``U``, error transport ``A`` and noise map ``G``.

    The increment error follows ``eta' = A eta + G n`` to first order.
    """
    U = one_step_upsilon(sample, bias, scheme)
    G = noise_jacobian_g(sample, bias, scheme)
    return U, adjoint(U.inverse()) @ f_matrix(sample.dt), G


def preint_integrate(delta: PreintegratedDelta, sample: ImuSample) -> PreintegratedDelta:
    """Fold one IMU sample into the increment, covariance and bias Jacobian."""
    U, A, G = step_matrices(sample, delta.bias_ref, delta.scheme)
    cov = A @ delta.cov @ A.T + G @ delta.meas_cov @ G.T
    return replace(
        delta,
        upsilon=phi_map(delta.upsilon, sample.dt) @ U,
        cov=0.5 * (cov + cov.T),
        bias_jacobian=A @ delta.bias_jacobian + G,
        dt_total=delta.dt_total + sample.dt,
        steps=delta.steps + 1,
    )


def preintegrate(samples, bias_ref: ImuBias = ImuBias(), meas_cov=None, scheme: str = EULER) -> PreintegratedDelta:
    delta = preint_init(bias_ref, meas_cov, scheme)
    for s in samples:
        delta = preint_integrate(delta, s)
    return delta


def preint_bias_update(delta: PreintegratedDelta, db) -> PreintegratedDelta:
    """First-order correction for a new bias ``bias_ref + db``.

    The covariance is kept; only the increment and the reference bias move.
    """
    db = np.asarray(db, dtype=float).reshape(6)
    return replace(delta, upsilon=delta.upsilon @ se23_exp(delta.bias_jacobian @ db), bias_ref=delta.bias_ref + db)


def corrected_upsilon(delta: PreintegratedDelta, bias: ImuBias) -> ExtendedPose:
    """Increment for ``bias`` through the first-order bias correction."""
    return delta.upsilon @ se23_exp(delta.bias_jacobian @ (bias.vector() - delta.bias_ref.vector()))


def preint_predict(delta: PreintegratedDelta, Ti: ExtendedPose, g=DEFAULT_GRAVITY,
                   upsilon: ExtendedPose | None = None) -> ExtendedPose:
    """``Gamma Phi(T_i) Upsilon_hat`` over the integrated interval."""
    U = delta.upsilon if upsilon is None else upsilon
    t = delta.dt_total
    return gamma_flat(g, t) @ phi_map(Ti, t) @ U


def preint_residual(delta: PreintegratedDelta, Ti: ExtendedPose, Tj: ExtendedPose, g=DEFAULT_GRAVITY,
                    upsilon: ExtendedPose | None = None) -> np.ndarray:
    """``log(Upsilon_hat^-1 (Gamma Phi(T_i))^-1 T_j)``, zero at the prediction."""
    U = delta.upsilon if upsilon is None else upsilon
    t = delta.dt_total
    return se23_log(U.inverse() @ (gamma_flat(g, t) @ phi_map(Ti, t)).inverse() @ Tj)


def sqrt_information(cov) -> np.ndarray:
    """Upper factor ``W`` with ``W^T W = cov^-1`` (Cholesky, jittered)."""
    cov = np.asarray(cov, dtype=float)
    L = np.linalg.cholesky(0.5 * (cov + cov.T) + CHOL_JITTER * np.eye(cov.shape[0]))
    return np.linalg.inv(L)


def whitened_residual(delta: PreintegratedDelta, Ti, Tj, g=DEFAULT_GRAVITY) -> np.ndarray:
    return sqrt_information(delta.cov) @ preint_residual(delta, Ti, Tj, g)


# --------------------------------------------------------------------------
# per-component formulation (rotation, velocity, position treated separately)


@dataclass(frozen=True, eq=False)
class ComponentDelta:
    """Same increment, with rotation-times-vector covariance and Jacobians.

    ``cov`` is expressed in the coordinates ``dR = dR_hat exp(phi)``,
    ``dv = dv_hat + nu``, ``dp = dp_hat + dR_hat rho``. The position Jacobian
    and the per-component bias Jacobians ``jac_R``, ``jac_v``, ``jac_p`` map
    a bias change to ``exp``-rotation and additive velocity/position updates.
    """

    upsilon: ExtendedPose
    cov: np.ndarray
    jac_R: np.ndarray
    jac_v: np.ndarray
    jac_p: np.ndarray
    dt_total: float
    bias_ref: ImuBias
    meas_cov: np.ndarray


def component_init(bias_ref: ImuBias = ImuBias(), meas_cov=None) -> ComponentDelta:
    meas_cov = np.zeros((6, 6)) if meas_cov is None else np.asarray(meas_cov, dtype=float).reshape(6, 6)
    z = np.zeros((3, 6))
    return ComponentDelta(ExtendedPose.identity(), np.zeros((9, 9)), z, z, z, 0.0, bias_ref, meas_cov)


def component_step_matrices(Rh, sample: ImuSample, bias: ImuBias = ImuBias()):
    """Per-component counterpart of :func:`step_matrices`.

    Args:
        Rh: rotation of the increment accumulated before this sample.

    Returns:
        ``(U, A, BG, G)``; the error in per-component coordinates follows
        ``e' = A e + BG n`` and ``G`` is the SE_2(3) noise map.
    """
    U = one_step_upsilon(sample, bias, EULER)
    G = noise_jacobian_g(sample, bias, EULER)
    dt = sample.dt
    dR, dv, dp = U.R, U.v, U.p
    Rn = Rh @ dR
    A = np.zeros((9, 9))
    A[0:3, 0:3] = dR.T
    A[3:6, 0:3] = -Rh @ skew(dv)
    A[3:6, 3:6] = np.eye(3)
    A[6:9, 0:3] = -dR.T @ skew(dp)
    A[6:9, 3:6] = Rn.T * dt
    A[6:9, 6:9] = dR.T
    # SE_2(3) one-step noise expressed in these coordinates (first order)
    B = np.eye(9)
    B[3:6, 3:6] = Rn
    return U, A, B @ G, G


def component_integrate(delta: ComponentDelta, sample: ImuSample) -> ComponentDelta:
    Rh = delta.upsilon.R
    U, A, BG, G = component_step_matrices(Rh, sample, delta.bias_ref)
    dt = sample.dt
    dR, dv, dp = U.R, U.v, U.p
    cov = A @ delta.cov @ A.T + BG @ delta.meas_cov @ BG.T
    jR = dR.T @ delta.jac_R + G[0:3]
    jv = delta.jac_v - Rh @ skew(dv) @ delta.jac_R + np.hstack([np.zeros((3, 3)), -Rh * dt])
    jp = (delta.jac_p + delta.jac_v * dt - Rh @ skew(dp) @ delta.jac_R
          + np.hstack([np.zeros((3, 3)), -Rh * (0.5 * dt * dt)]))
    return replace(
        delta,
        upsilon=phi_map(delta.upsilon, dt) @ U,
        cov=0.5 * (cov + cov.T),
        jac_R=jR,
        jac_v=jv,
        jac_p=jp,
        dt_total=delta.dt_total + dt,
    )


def component_bias_update(delta: ComponentDelta, db) -> ExtendedPose:
    """Per-component first-order correction: exp on rotation, additive otherwise."""
    db = np.asarray(db, dtype=float).reshape(6)
    U = delta.upsilon
    return ExtendedPose(U.R @ so3_exp(delta.jac_R @ db), U.v + delta.jac_v @ db, U.p + delta.jac_p @ db)


def component_preintegrate(samples, bias_ref: ImuBias = ImuBias(), meas_cov=None) -> ComponentDelta:
    delta = component_init(bias_ref, meas_cov)
    for s in samples:
        delta = component_integrate(delta, s)
    return delta


def factor_covariance(samples, bias_ref: ImuBias, meas_cov, kind: str = SE23):
    """Increment and its covariance for a given uncertainty representation.

    The rotation-times-vector and SE(3)-times-vector coordinates agree to
    first order, so both use the per-component recursion.
    """
    if kind == SE23:
        d = preintegrate(samples, bias_ref, meas_cov)
        return d.upsilon, d.cov
    if kind in (SO3xR6, SE3xR3):
        d = component_preintegrate(samples, bias_ref, meas_cov)
        return d.upsilon, d.cov
    raise ValueError(f"unknown representation {kind!r}")
