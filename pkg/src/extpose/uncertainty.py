"""Concentrated Gaussians on SE_2(3) and their propagation.

A concentrated Gaussian is ``T = T_hat @ exp(xi)`` with ``xi ~ N(0, Sigma)``.
Through the discrete model ``T' = Gamma Phi(T) Upsilon exp(eta)`` the mean
follows the noise-free model and the covariance follows

    Sigma' = A Sigma A^T + Q (+ S4),     A = Ad(Upsilon^-1) F,

where ``S4`` holds the third- and fourth-order terms.

Three competing uncertainty parameterizations (retractions) are provided for
comparison: ``SE23`` (the group exponential), ``SO3xR6`` (rotation on the
right, velocity additive, position in the body frame) and ``SE3xR3`` (SE(3)
exponential on rotation and position, additive velocity).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from extpose import kernels
from extpose.imu import f_matrix, phi_map
from extpose.lie import (
    ExtendedPose,
    adjoint,
    se23_exp,
    se23_log,
    so3_exp,
    so3_left_jacobian,
    so3_left_jacobian_inv,
    so3_log,
)

SE23 = "SE23"
SO3xR6 = "SO3xR6"
SE3xR3 = "SE3xR3"
RETRACTIONS = (SE23, SO3xR6, SE3xR3)

NEG_EIG_TOL = 1e-9


def symmetrize(S) -> np.ndarray:
    """Symmetrize and check positive semidefiniteness.

    Raises if an eigenvalue is below ``-tol``, with ``tol`` 1e-9 relative to
    ``max(1, max|S|)``. Smaller negative eigenvalues are round-off and are left
    alone: rebuilding the matrix from its eigendecomposition would smear
    round-off into entries that are structurally zero.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    tol = NEG_EIG_TOL * max(1.0, np.abs(S).max())
    if w[0] < -tol:
        raise ValueError(f"covariance has a negative eigenvalue {w[0]:.3e}")
    return S


@dataclass(frozen=True, eq=False)
class ConcentratedGaussian:
    mean: ExtendedPose
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (9, 9):
            raise ValueError("covariance must be 9x9")
        object.__setattr__(self, "cov", symmetrize(cov))

    @classmethod
    def certain(cls, mean: ExtendedPose) -> "ConcentratedGaussian":
        return cls(mean, np.zeros((9, 9)))


def transport_matrix(upsilon: ExtendedPose, dt: float) -> np.ndarray:
    """``A = Ad(Upsilon^-1) F`` mapping the old error to the new one."""
    return adjoint(upsilon.inverse()) @ f_matrix(dt)


def _propagate_mean(T, upsilon, gamma, dt):
    return gamma @ phi_map(T, dt) @ upsilon


def propagate_noise_free(state: ConcentratedGaussian, upsilon: ExtendedPose, gamma: ExtendedPose,
                         dt: float) -> ConcentratedGaussian:
    """Exact propagation when the increment is noise free."""
    A = transport_matrix(upsilon, dt)
    return ConcentratedGaussian(_propagate_mean(state.mean, upsilon, gamma, dt), A @ state.cov @ A.T)


def propagate_second_order(state, upsilon, gamma, Q, dt) -> ConcentratedGaussian:
    A = transport_matrix(upsilon, dt)
    return ConcentratedGaussian(_propagate_mean(state.mean, upsilon, gamma, dt), A @ state.cov @ A.T + Q)


def propagate_fourth_order(state, upsilon, gamma, Q, dt) -> ConcentratedGaussian:
    A = transport_matrix(upsilon, dt)
    S = A @ state.cov @ A.T
    S = 0.5 * (S + S.T)
    cov = S + Q + fourth_order_correction(S, Q)
    return ConcentratedGaussian(_propagate_mean(state.mean, upsilon, gamma, dt), cov)


# --------------------------------------------------------------------------
# fourth-order terms

_I3 = np.eye(3)
_PHI, _NU, _RHO = 0, 1, 2
# nonzero blocks of curlywedge(xi), by block row: (xi component, block column)
_CW_ROWS = {
    _PHI: ((_PHI, _PHI),),
    _NU: ((_NU, _PHI), (_PHI, _NU)),
    _RHO: ((_RHO, _PHI), (_PHI, _RHO)),
}


def dbl(A) -> np.ndarray:
    """``<<A>> = -tr(A) I + A``; ``E[a^ b^] = <<E[b a^T]>>`` for 3-vectors."""
    return -np.trace(A) * _I3 + A


def dbl2(A, B) -> np.ndarray:
    """``<<A, B>> = <<A>><<B>> + <<B A>>``."""
    return dbl(A) @ dbl(B) + dbl(B @ A)


def _blk(M, i, j):
    return M[3 * i:3 * i + 3, 3 * j:3 * j + 3]


def _a_matrix(S) -> np.ndarray:
    """``E[xi^ xi^]`` (curlywedge squared) for ``xi ~ N(0, S)``."""
    out = np.zeros((9, 9))
    d = dbl(_blk(S, _PHI, _PHI))
    for i in range(3):
        out[3 * i:3 * i + 3, 3 * i:3 * i + 3] = d
    out[3:6, 0:3] = dbl(_blk(S, _NU, _PHI) + _blk(S, _PHI, _NU))
    out[6:9, 0:3] = dbl(_blk(S, _RHO, _PHI) + _blk(S, _PHI, _RHO))
    return out


def _b_matrix(S, Q) -> np.ndarray:
    """``E[xi^ Q xi^T]`` for ``xi ~ N(0, S)``.

    Uses ``E[a^ M b^T] = <<E[b a^T], M^T>>`` over the nonzero blocks of the
    curlywedge matrix.
    """
    out = np.zeros((9, 9))
    for X in range(3):
        for Y in range(X, 3):
            acc = np.zeros((3, 3))
            for a, c in _CW_ROWS[X]:
                for b, e in _CW_ROWS[Y]:
                    acc += dbl2(_blk(S, b, a), _blk(Q, e, c))
            out[3 * X:3 * X + 3, 3 * Y:3 * Y + 3] = acc
            out[3 * Y:3 * Y + 3, 3 * X:3 * X + 3] = acc.T
    return out


def fourth_order_correction(sigma, Q) -> np.ndarray:
    """Third- and fourth-order covariance terms for one propagation step.

    Args:
        sigma: the transported covariance ``A Sigma A^T``.
        Q: the step noise covariance.

    Returns:
        ``(A_S Q + Q A_S^T + A_Q S + S A_Q^T) / 12 + B / 4``.
    """
    sigma = np.asarray(sigma, dtype=float)
    Q = np.asarray(Q, dtype=float)
    As, Aq = _a_matrix(sigma), _a_matrix(Q)
    out = (As @ Q + Q @ As.T + Aq @ sigma + sigma @ Aq.T) / 12.0 + _b_matrix(sigma, Q) / 4.0
    return 0.5 * (out + out.T)


# --------------------------------------------------------------------------
# retractions


def retract(T_hat: ExtendedPose, xi, kind: str = SE23) -> ExtendedPose:
    xi = np.asarray(xi, dtype=float).reshape(9)
    phi, nu, rho = xi[0:3], xi[3:6], xi[6:9]
    if kind == SE23:
        return T_hat @ se23_exp(xi)
    if kind == SO3xR6:
        return ExtendedPose(T_hat.R @ so3_exp(phi), T_hat.v + nu, T_hat.p + T_hat.R @ rho)
    if kind == SE3xR3:
        return ExtendedPose(T_hat.R @ so3_exp(phi), T_hat.v + nu, T_hat.p + T_hat.R @ so3_left_jacobian(phi) @ rho)
    raise ValueError(f"unknown retraction {kind!r}")


def local_coords(T: ExtendedPose, T_hat: ExtendedPose, kind: str = SE23) -> np.ndarray:
    """Inverse of :func:`retract`: ``xi`` with ``retract(T_hat, xi) = T``.

    Raises:
        BranchError: if the rotation discrepancy is too close to pi.
    """
    if kind == SE23:
        return se23_log(T_hat.inverse() @ T)
    phi = so3_log(T_hat.R.T @ T.R)
    dp = T_hat.R.T @ (T.p - T_hat.p)
    if kind == SO3xR6:
        rho = dp
    elif kind == SE3xR3:
        rho = so3_left_jacobian_inv(phi) @ dp
    else:
        raise ValueError(f"unknown retraction {kind!r}")
    return np.concatenate([phi, T.v - T_hat.v, rho])


def local_coords_batch(R, v, p, T_hat: ExtendedPose, kind: str = SE23) -> np.ndarray:
    """Vectorized :func:`local_coords`; branch failures come back as NaN rows."""
    Rt = T_hat.R.T
    dR = np.einsum("ij,njk->nik", Rt, R)
    if kind == SE23:
        dv = (v - T_hat.v) @ Rt.T
        dp = (p - T_hat.p) @ Rt.T
        return kernels.se23_log_batch(np.ascontiguousarray(dR), dv, dp)
    phi = kernels.so3_log_batch(np.ascontiguousarray(dR))
    dp = (p - T_hat.p) @ Rt.T
    if kind == SO3xR6:
        rho = dp
    elif kind == SE3xR3:
        # J^-1 rho through the SE_2(3) log of a pose with zero velocity
        rho = kernels.se23_log_batch(np.ascontiguousarray(dR), np.zeros_like(dp), dp)[:, 6:9]
    else:
        raise ValueError(f"unknown retraction {kind!r}")
    return np.concatenate([phi, v - T_hat.v, rho], axis=1)


def _as_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 3:
        return tuple(np.asarray(a, dtype=float) for a in samples)
    samples = list(samples)
    return (np.array([s.R for s in samples]), np.array([s.v for s in samples]), np.array([s.p for s in samples]))


def mc_covariance(samples, mean: ExtendedPose, kind: str = SE23) -> np.ndarray:
    """Sample covariance ``sum xi xi^T / (N - 1)`` of the local coordinates.

    Args:
        samples: a sequence of :class:`ExtendedPose` or a tuple ``(R, v, p)``
            of stacked arrays.
        mean: the point the coordinates are taken around (not re-centred).
        kind: retraction used for the coordinates.

    Raises:
        ValueError: with fewer than two samples or when a sample falls on the
            logarithm branch cut.
    """
    R, v, p = _as_arrays(samples)
    if R.shape[0] < 2:
        raise ValueError("need at least two samples")
    xi = local_coords_batch(R, v, p, mean, kind)
    if np.isnan(xi).any():
        raise ValueError("a sample lies on the logarithm branch cut")
    return xi.T @ xi / (xi.shape[0] - 1)


def sample_mean_so3xr6(samples, iters: int = 20) -> ExtendedPose:
    """Mean of samples in the rotation-times-vector sense.

    The rotation is the intrinsic (Karcher) mean, velocity and position are
    arithmetic means.
    """
    R, v, p = _as_arrays(samples)
    Rm = R[0].copy()
    for _ in range(iters):
        delta = kernels.so3_log_batch(np.ascontiguousarray(np.einsum("ji,njk->nik", Rm, R))).mean(axis=0)
        Rm = Rm @ so3_exp(delta)
        if np.linalg.norm(delta) < 1e-14:
            break
    return ExtendedPose(Rm, v.mean(axis=0), p.mean(axis=0))


# --------------------------------------------------------------------------
# consistency and mean shift


def nees(errors, sigma) -> float:
    """Average normalized estimation error squared, ``sum e^T S^-1 e / (d N)``.

    Raises:
        ValueError: if ``sigma`` is singular (condition number >= 1e12).
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    if np.linalg.cond(sigma) >= 1e12:
        raise ValueError("covariance is singular")
    L = np.linalg.cholesky(0.5 * (sigma + sigma.T))
    w = np.linalg.solve(L, errors.T)
    return float((w * w).sum() / errors.size)


def nees_per_sample(errors, sigma) -> np.ndarray:
    """``e^T S^-1 e / d`` for each row of ``errors``."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    L = np.linalg.cholesky(0.5 * (sigma + sigma.T))
    w = np.linalg.solve(L, errors.T)
    return (w * w).sum(axis=0) / errors.shape[1]


def mean_position_shift(sigma) -> np.ndarray:
    """Second-order shift ``E[phi x rho] / 2`` of the position mean.

    With ``T = T_hat exp(xi)`` the position is
    ``p_hat + rho + phi x rho / 2 + O(|xi|^3)``, so the expected position moves
    by half the cross product expectation built from the phi-rho block.
    """
    C = np.asarray(sigma)[0:3, 6:9]  # C[a, b] = E[phi_a rho_b]
    return 0.5 * np.array([C[1, 2] - C[2, 1], C[2, 0] - C[0, 2], C[0, 1] - C[1, 0]])
