"""Independent reference computations used only by the tests."""
import math

import numpy as np

from extpose.lie import ExtendedPose, skew


def expm_series(X, terms=30):
    """Truncated power series of the matrix exponential."""
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    return out


def jac_series(X, terms=30):
    """sum_k X^k / (k+1)!, the left Jacobian when X is the ad-matrix."""
    out = np.zeros_like(X)
    term = np.eye(X.shape[0])
    for k in range(terms):
        out = out + term / math.factorial(k + 1)
        term = term @ X
    return out


def rk4(f, y0, t0, t1, h):
    """Fixed-step RK4 for a flat state vector."""
    n = max(1, int(round((t1 - t0) / h)))
    h = (t1 - t0) / n
    y = np.array(y0, dtype=float)
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def axis_angle_matrix(axis, angle):
    """Rotation from an axis and an angle through the quaternion formula."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    w = math.cos(angle / 2)
    x, y, z = axis * math.sin(angle / 2)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def pack(T):
    """Flatten an extended pose to (R row-major, v, p)."""
    return np.concatenate([T.R.ravel(), T.v, T.p])


def unpack(y):
    return ExtendedPose(y[:9].reshape(3, 3), y[9:12], y[12:15])


def rk4_rotating(T0, samples, earth, substeps=20):
    """Continuous rotating-frame kinematics, acceleration held in the step's start frame."""
    W = skew(earth.omega_earth)
    y = pack(T0)
    t0 = 0.0
    for s in samples:
        def f(t, y, s=s, t0=t0):
            R, v, p = y[:9].reshape(3, 3), y[9:12], y[12:15]
            w = np.linalg.norm(s.omega_m)
            a = s.acc_m if w == 0 else axis_angle_matrix(s.omega_m, -w * (t - t0)) @ s.acc_m
            dR = -W @ R + R @ skew(s.omega_m)
            dv = R @ a + earth.g - 2 * W @ v - W @ W @ p
            return np.concatenate([dR.ravel(), dv, v])

        y = rk4(f, y, t0, t0 + s.dt, s.dt / substeps)
        t0 += s.dt
    return unpack(y)
