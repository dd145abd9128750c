"""Numba-compiled batch kernels, loop-per-sample versions of ``_numpy``."""
import math

import numpy as np

from extpose._accel import njit
from extpose.lie import PI_BRANCH_TOL, SERIES_THRESHOLD, _SERIES

_SIN_T = np.array(_SERIES["sin_t"])
_OMC = np.array(_SERIES["one_minus_cos_t2"])
_TMS = np.array(_SERIES["t_minus_sin_t3"])
_JINV = np.array(_SERIES["jinv"])
_HALF = np.array(_SERIES["half_t_over_sin"])


@njit
def _horner(c, t2):
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * t2 + c[k]
    return acc


@njit
def _exp_coefs(t):
    if t < SERIES_THRESHOLD:
        t2 = t * t
        return _horner(_SIN_T, t2), _horner(_OMC, t2), _horner(_TMS, t2)
    s, c = math.sin(t), math.cos(t)
    return s / t, (1.0 - c) / (t * t), (t - s) / (t * t * t)


@njit
def _skew_sq(x, y, z, K, K2):
    K[0, 0] = 0.0
    K[0, 1] = -z
    K[0, 2] = y
    K[1, 0] = z
    K[1, 1] = 0.0
    K[1, 2] = -x
    K[2, 0] = -y
    K[2, 1] = x
    K[2, 2] = 0.0
    for i in range(3):
        for j in range(3):
            K2[i, j] = K[i, 0] * K[0, j] + K[i, 1] * K[1, j] + K[i, 2] * K[2, j]


@njit
def _se23_exp(xi, R, v, p, K, K2):
    """Write exp(xi) into R, v, p (scratch K, K2)."""
    x, y, z = xi[0], xi[1], xi[2]
    t = math.sqrt(x * x + y * y + z * z)
    a, b, c = _exp_coefs(t)
    _skew_sq(x, y, z, K, K2)
    for i in range(3):
        vi = 0.0
        pi = 0.0
        for j in range(3):
            d = 1.0 if i == j else 0.0
            R[i, j] = d + a * K[i, j] + b * K2[i, j]
            Jij = d + b * K[i, j] + c * K2[i, j]
            vi += Jij * xi[3 + j]
            pi += Jij * xi[6 + j]
        v[i] = vi
        p[i] = pi


@njit
def so3_exp_batch(phi):
    N = phi.shape[0]
    out = np.empty((N, 3, 3))
    K = np.empty((3, 3))
    K2 = np.empty((3, 3))
    for n in range(N):
        x, y, z = phi[n, 0], phi[n, 1], phi[n, 2]
        t = math.sqrt(x * x + y * y + z * z)
        a, b, _ = _exp_coefs(t)
        _skew_sq(x, y, z, K, K2)
        for i in range(3):
            for j in range(3):
                out[n, i, j] = (1.0 if i == j else 0.0) + a * K[i, j] + b * K2[i, j]
    return out


@njit
def se23_exp_batch(xi):
    N = xi.shape[0]
    R = np.empty((N, 3, 3))
    v = np.empty((N, 3))
    p = np.empty((N, 3))
    K = np.empty((3, 3))
    K2 = np.empty((3, 3))
    for n in range(N):
        _se23_exp(xi[n], R[n], v[n], p[n], K, K2)
    return R, v, p


@njit
def _so3_log(R, out):
    wx = R[2, 1] - R[1, 2]
    wy = R[0, 2] - R[2, 0]
    wz = R[1, 0] - R[0, 1]
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr + 1.0 < PI_BRANCH_TOL:
        out[0] = out[1] = out[2] = np.nan
        return
    t = math.atan2(0.5 * math.sqrt(wx * wx + wy * wy + wz * wz), 0.5 * (tr - 1.0))
    if t < SERIES_THRESHOLD:
        f = _horner(_HALF, t * t)
    else:
        f = t / (2.0 * math.sin(t))
    out[0] = f * wx
    out[1] = f * wy
    out[2] = f * wz


@njit
def so3_log_batch(R):
    N = R.shape[0]
    out = np.empty((N, 3))
    for n in range(N):
        _so3_log(R[n], out[n])
    return out


@njit
def se23_log_batch(R, v, p):
    N = R.shape[0]
    out = np.empty((N, 9))
    K = np.empty((3, 3))
    K2 = np.empty((3, 3))
    for n in range(N):
        _so3_log(R[n], out[n, 0:3])
        x, y, z = out[n, 0], out[n, 1], out[n, 2]
        if math.isnan(x):
            out[n, 3:] = np.nan
            continue
        t = math.sqrt(x * x + y * y + z * z)
        if t < SERIES_THRESHOLD:
            c = _horner(_JINV, t * t)
        else:
            c = 1.0 / (t * t) - (1.0 + math.cos(t)) / (2.0 * t * math.sin(t))
        _skew_sq(x, y, z, K, K2)
        for i in range(3):
            nu = 0.0
            rho = 0.0
            for j in range(3):
                Jij = (1.0 if i == j else 0.0) - 0.5 * K[i, j] + c * K2[i, j]
                nu += Jij * v[n, j]
                rho += Jij * p[n, j]
            out[n, 3 + i] = nu
            out[n, 6 + i] = rho
    return out


@njit
def _matmul3(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit
def _compose_right(R, v, p, UR, Uv, Up, tmp):
    """(R, v, p) <- (R, v, p) @ (UR, Uv, Up) in place."""
    for i in range(3):
        v[i] += R[i, 0] * Uv[0] + R[i, 1] * Uv[1] + R[i, 2] * Uv[2]
        p[i] += R[i, 0] * Up[0] + R[i, 1] * Up[1] + R[i, 2] * Up[2]
    _matmul3(R, UR, tmp)
    R[:, :] = tmp


@njit
def propagate_tangent_noise(R0, v0, p0, GR, Gv, Gp, UR, Uv, Up, dts, L, z):
    N = R0.shape[0]
    K = dts.shape[0]
    R = R0.copy()
    v = v0.copy()
    p = p0.copy()
    w = np.empty(9)
    ER = np.empty((3, 3))
    Ev = np.empty(3)
    Ep = np.empty(3)
    S1 = np.empty((3, 3))
    S2 = np.empty((3, 3))
    tmp = np.empty((3, 3))
    t3 = np.empty(3)
    for n in range(N):
        Rn = R[n]
        vn = v[n]
        pn = p[n]
        for k in range(K):
            dt = dts[k]
            for i in range(3):
                pn[i] += dt * vn[i]
            _matmul3(GR[k], Rn, tmp)
            Rn[:, :] = tmp
            for i in range(3):
                t3[i] = GR[k, i, 0] * vn[0] + GR[k, i, 1] * vn[1] + GR[k, i, 2] * vn[2] + Gv[k, i]
            vn[:] = t3
            for i in range(3):
                t3[i] = GR[k, i, 0] * pn[0] + GR[k, i, 1] * pn[1] + GR[k, i, 2] * pn[2] + Gp[k, i]
            pn[:] = t3
            _compose_right(Rn, vn, pn, UR[k], Uv[k], Up[k], tmp)
            for i in range(9):
                acc = 0.0
                for j in range(9):
                    acc += L[k, i, j] * z[n, k, j]
                w[i] = acc
            _se23_exp(w, ER, Ev, Ep, S1, S2)
            _compose_right(Rn, vn, pn, ER, Ev, Ep, tmp)
    return R, v, p


@njit
def preintegrate_noisy(omega, acc, dts, noise):
    N = noise.shape[0]
    K = dts.shape[0]
    dR = np.empty((N, 3, 3))
    dv = np.zeros((N, 3))
    dp = np.zeros((N, 3))
    w = np.empty(9)
    ER = np.empty((3, 3))
    Ev = np.empty(3)
    Ep = np.empty(3)
    S1 = np.empty((3, 3))
    S2 = np.empty((3, 3))
    tmp = np.empty((3, 3))
    Ra = np.empty(3)
    for n in range(N):
        for i in range(3):
            for j in range(3):
                dR[n, i, j] = 1.0 if i == j else 0.0
        for k in range(K):
            dt = dts[k]
            for i in range(3):
                w[i] = (omega[k, i] + noise[n, k, i]) * dt
                w[3 + i] = 0.0
                w[6 + i] = 0.0
            for i in range(3):
                Ra[i] = 0.0
                for j in range(3):
                    Ra[i] += dR[n, i, j] * (acc[k, j] + noise[n, k, 3 + j])
            for i in range(3):
                dp[n, i] += dv[n, i] * dt + 0.5 * Ra[i] * dt * dt
                dv[n, i] += Ra[i] * dt
            _se23_exp(w, ER, Ev, Ep, S1, S2)
            _matmul3(dR[n], ER, tmp)
            dR[n, :, :] = tmp
    return dR, dv, dp
