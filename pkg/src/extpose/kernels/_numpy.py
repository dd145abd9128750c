"""Vectorized numpy implementations of the batch kernels.

Every function works on a leading sample axis ``N``. Rotations are
``(N, 3, 3)``, vectors ``(N, 3)``, tangent vectors ``(N, 9)``.
"""
import numpy as np

from extpose.lie import PI_BRANCH_TOL, SERIES_THRESHOLD, _SERIES

_C = {name: np.array(coeffs) for name, coeffs in _SERIES.items()}


def _series(name, t2):
    c = _C[name]
    acc = np.zeros_like(t2)
    for k in range(len(c) - 1, -1, -1):
        acc = acc * t2 + c[k]
    return acc


def _coef(name, t):
    small = t < SERIES_THRESHOLD
    ts = np.where(small, 1.0, t)
    s, c = np.sin(ts), np.cos(ts)
    if name == "sin_t":
        closed = s / ts
    elif name == "one_minus_cos_t2":
        closed = (1.0 - c) / ts**2
    elif name == "t_minus_sin_t3":
        closed = (ts - s) / ts**3
    elif name == "jinv":
        closed = 1.0 / ts**2 - (1.0 + c) / (2.0 * ts * s)
    elif name == "half_t_over_sin":
        closed = ts / (2.0 * s)
    else:
        raise KeyError(name)
    return np.where(small, _series(name, t * t), closed)


def skew_batch(w):
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def _norm(w):
    return np.sqrt(np.einsum("...i,...i->...", w, w))


def so3_exp_batch(phi):
    t = _norm(phi)
    K = skew_batch(phi)
    a = _coef("sin_t", t)[..., None, None]
    b = _coef("one_minus_cos_t2", t)[..., None, None]
    return np.eye(3) + a * K + b * (K @ K)


def so3_left_jacobian_batch(phi):
    t = _norm(phi)
    K = skew_batch(phi)
    a = _coef("one_minus_cos_t2", t)[..., None, None]
    b = _coef("t_minus_sin_t3", t)[..., None, None]
    return np.eye(3) + a * K + b * (K @ K)


def so3_left_jacobian_inv_batch(phi):
    t = _norm(phi)
    K = skew_batch(phi)
    c = _coef("jinv", t)[..., None, None]
    return np.eye(3) - 0.5 * K + c * (K @ K)


def so3_log_batch(R):
    """Principal logarithm; rows within the pi branch band come back NaN."""
    w = np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    tr = np.trace(R, axis1=-2, axis2=-1)
    t = np.arctan2(0.5 * _norm(w), 0.5 * (tr - 1.0))
    out = _coef("half_t_over_sin", t)[..., None] * w
    out[tr + 1.0 < PI_BRANCH_TOL] = np.nan
    return out


def se23_exp_batch(xi):
    phi = xi[..., 0:3]
    J = so3_left_jacobian_batch(phi)
    return so3_exp_batch(phi), np.einsum("...ij,...j->...i", J, xi[..., 3:6]), np.einsum(
        "...ij,...j->...i", J, xi[..., 6:9]
    )


def se23_log_batch(R, v, p):
    phi = so3_log_batch(R)
    Ji = so3_left_jacobian_inv_batch(np.nan_to_num(phi))
    nu = np.einsum("...ij,...j->...i", Ji, v)
    rho = np.einsum("...ij,...j->...i", Ji, p)
    out = np.concatenate([phi, nu, rho], axis=-1)
    out[np.isnan(phi).any(axis=-1)] = np.nan
    return out


def propagate_tangent_noise(R, v, p, GR, Gv, Gp, UR, Uv, Up, dts, L, z):
    """Push samples through ``T <- Gamma Phi(T) Upsilon exp(L z)`` for K steps.

    Args:
        R, v, p: initial samples, ``(N,3,3)``, ``(N,3)``, ``(N,3)``.
        GR, Gv, Gp: per-step gravity factors, ``(K,3,3)``, ``(K,3)``, ``(K,3)``.
        UR, Uv, Up: per-step increments, same shapes as the gravity factors.
        dts: ``(K,)`` step lengths.
        L: ``(K,9,9)`` noise square roots.
        z: ``(N,K,9)`` standard normal draws.

    Returns:
        Final ``(R, v, p)`` samples.
    """
    R, v, p = R.copy(), v.copy(), p.copy()
    for k in range(dts.shape[0]):
        dt = dts[k]
        p = p + dt * v
        # Gamma @ Phi(T)
        R, v, p = GR[k] @ R, v @ GR[k].T + Gv[k], p @ GR[k].T + Gp[k]
        # @ Upsilon
        v = v + np.einsum("nij,j->ni", R, Uv[k])
        p = p + np.einsum("nij,j->ni", R, Up[k])
        R = R @ UR[k]
        # @ exp(w)
        ER, Ev, Ep = se23_exp_batch(z[:, k, :] @ L[k].T)
        v = v + np.einsum("nij,nj->ni", R, Ev)
        p = p + np.einsum("nij,nj->ni", R, Ep)
        R = R @ ER
    return R, v, p


def preintegrate_noisy(omega, acc, dts, noise):
    """Euler preintegration of IMU readings perturbed per sample.

    Args:
        omega, acc: ``(K,3)`` unbiased readings.
        dts: ``(K,)`` step lengths.
        noise: ``(N,K,6)`` additive (gyro, acc) noise per step.

    Returns:
        ``(dR, dv, dp)`` batches of the preintegrated increment.
    """
    N = noise.shape[0]
    dR = np.broadcast_to(np.eye(3), (N, 3, 3)).copy()
    dv = np.zeros((N, 3))
    dp = np.zeros((N, 3))
    for k in range(dts.shape[0]):
        dt = dts[k]
        w = omega[k] + noise[:, k, 0:3]
        a = acc[k] + noise[:, k, 3:6]
        Ra = np.einsum("nij,nj->ni", dR, a)
        dp = dp + dv * dt + 0.5 * Ra * dt * dt
        dv = dv + Ra * dt
        dR = dR @ so3_exp_batch(w * dt)
    return dR, dv, dp
