"""IMU measurement model and the flat-Earth discrete kinematics.

The exact discretization of the strapdown equations over ``[t_i, t_j]`` is::

    T_j = Gamma_{dt} @ Phi_{dt}(T_i) @ Upsilon_ij

where ``Phi`` propagates position with velocity, ``Gamma`` carries gravity and
``Upsilon`` holds the body-frame increments computed from the IMU.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from extpose.lie import (
    ExtendedPose,
    skew,
    so3_exp,
    so3_right_jacobian,
)

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])

EULER = "euler"
MIDPOINT = "midpoint"
SCHEMES = (EULER, MIDPOINT)


@dataclass(frozen=True)
class ImuSample:
    """Gyro and accelerometer reading held constant over ``dt`` seconds."""

    omega_m: np.ndarray
    acc_m: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "omega_m", np.asarray(self.omega_m, dtype=float).reshape(3))
        object.__setattr__(self, "acc_m", np.asarray(self.acc_m, dtype=float).reshape(3))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class ImuBias:
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "gyro", np.array(self.gyro, dtype=float).reshape(3))
        object.__setattr__(self, "acc", np.array(self.acc, dtype=float).reshape(3))

    @classmethod
    def from_vector(cls, b) -> "ImuBias":
        b = np.asarray(b, dtype=float).reshape(6)
        return cls(b[:3], b[3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.gyro, self.acc])

    def __add__(self, db) -> "ImuBias":
        return ImuBias.from_vector(self.vector() + np.asarray(db, dtype=float).reshape(6))


@dataclass(frozen=True)
class ImuNoiseSpec:
    """Continuous-time noise spectral densities (3x3 covariances).

    Measurement noise densities are in (rad/s)^2/Hz and (m/s^2)^2/Hz, bias
    random-walk densities in (rad/s^2)^2/Hz and (m/s^3)^2/Hz.
    """

    gyro_cov: np.ndarray
    acc_cov: np.ndarray
    gyro_bias_rw_cov: np.ndarray
    acc_bias_rw_cov: np.ndarray

    def __post_init__(self):
        for name in ("gyro_cov", "acc_cov", "gyro_bias_rw_cov", "acc_bias_rw_cov"):
            M = np.asarray(getattr(self, name), dtype=float).reshape(3, 3)
            if np.abs(M - M.T).max() > 1e-12 * max(1.0, np.abs(M).max()):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-15:
                raise ValueError(f"{name} is not positive semidefinite")
            object.__setattr__(self, name, M)

    @classmethod
    def isotropic(cls, gyro_std, acc_std, gyro_bias_std=0.0, acc_bias_std=0.0) -> "ImuNoiseSpec":
        """Build from per-axis standard deviations (densities per sqrt(Hz))."""
        I = np.eye(3)
        return cls(gyro_std**2 * I, acc_std**2 * I, gyro_bias_std**2 * I, acc_bias_std**2 * I)


# Densities of a navigation-grade unit (rad/(s sqrt Hz), m/(s^2 sqrt Hz), and
# the matching bias random walks).
NAV_GRADE_IMU = dict(gyro_std=9.4e-6, acc_std=4.2e-3, gyro_bias_std=1.6e-6, acc_bias_std=5.4e-5)
# Values used by common preintegration simulations.
CONSUMER_IMU = dict(gyro_std=7e-4, acc_std=1.9e-2, gyro_bias_std=4e-4, acc_bias_std=1.2e-2)


def discretize_noise(spec: ImuNoiseSpec, dt: float):
    """Per-step covariances for a sampling period ``dt``.

    Returns:
        ``(meas_cov, bias_rw_cov)``, both 6x6 and ordered (gyro, acc). White
        measurement noise averaged over ``dt`` has covariance density / dt.
        The bias random walk accumulates over ``dt``, so its increment has
        covariance density * dt.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    meas = np.zeros((6, 6))
    meas[:3, :3] = spec.gyro_cov / dt
    meas[3:, 3:] = spec.acc_cov / dt
    rw = np.zeros((6, 6))
    rw[:3, :3] = spec.gyro_bias_rw_cov * dt
    rw[3:, 3:] = spec.acc_bias_rw_cov * dt
    return meas, rw


# --------------------------------------------------------------------------
# Phi / F / Gamma


def phi_map(T: ExtendedPose, t: float) -> ExtendedPose:
    """``(R, v, p) -> (R, v, p + t v)``, a group automorphism."""
    return ExtendedPose(T.R, T.v, T.p + t * T.v)


def f_matrix(dt: float) -> np.ndarray:
    """Matrix with ``phi_map(exp(xi), dt) = exp(F xi)``."""
    F = np.eye(9)
    F[6:9, 3:6] = dt * np.eye(3)
    return F


def gamma_flat(g, t: float) -> ExtendedPose:
    g = np.asarray(g, dtype=float)
    return ExtendedPose(np.eye(3), t * g, 0.5 * t * t * g)


# --------------------------------------------------------------------------
# one-step increment and its noise Jacobian


def _unbiased(sample: ImuSample, bias: ImuBias):
    return sample.omega_m - bias.gyro, sample.acc_m - bias.acc


def one_step_upsilon(sample: ImuSample, bias: ImuBias = ImuBias(), scheme: str = EULER) -> ExtendedPose:
    """Body-frame increment over one IMU period.

    ``euler`` holds the acceleration constant in the frame at the start of the
    step. ``midpoint`` evaluates it in the frame rotated by half the step.
    """
    w, a = _unbiased(sample, bias)
    dt = sample.dt
    dR = so3_exp(w * dt)
    if scheme == EULER:
        a_rot = a
    elif scheme == MIDPOINT:
        a_rot = so3_exp(0.5 * w * dt) @ a
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ExtendedPose(dR, a_rot * dt, 0.5 * a_rot * dt * dt)


def noise_jacobian_g(sample: ImuSample, bias: ImuBias = ImuBias(), scheme: str = EULER) -> np.ndarray:
    """9x6 matrix ``G`` with ``Upsilon(b + d) = Upsilon(b) exp(G d + O(d^2))``.

    Gyro/accelerometer noise ``eta`` adds to the readings, which is the same
    as evaluating the increment with bias ``b - eta``; the sign is irrelevant
    for ``Q = G cov G^T``.
    """
    w, a = _unbiased(sample, bias)
    dt = sample.dt
    x = w * dt
    G = np.zeros((9, 6))
    G[0:3, 0:3] = -so3_right_jacobian(x) * dt
    if scheme == EULER:
        RT = so3_exp(-x)
        G[3:6, 3:6] = -RT * dt
        G[6:9, 3:6] = -RT * (0.5 * dt * dt)
    elif scheme == MIDPOINT:
        RhT = so3_exp(-0.5 * x)
        C = RhT @ skew(a) @ so3_right_jacobian(0.5 * x)
        G[3:6, 0:3] = C * (0.5 * dt * dt)
        G[6:9, 0:3] = C * (0.25 * dt**3)
        G[3:6, 3:6] = -RhT * dt
        G[6:9, 3:6] = -RhT * (0.5 * dt * dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return G


def step_noise_cov(sample: ImuSample, bias: ImuBias, meas_cov, scheme: str = EULER) -> np.ndarray:
    """9x9 covariance ``G C G^T`` of the one-step increment noise."""
    G = noise_jacobian_g(sample, bias, scheme)
    Q = G @ np.asarray(meas_cov) @ G.T
    return 0.5 * (Q + Q.T)


def integrate_step(T: ExtendedPose, sample: ImuSample, bias: ImuBias = ImuBias(), g=DEFAULT_GRAVITY,
                   scheme: str = EULER) -> ExtendedPose:
    """One step of the discrete kinematics ``Gamma Phi(T) Upsilon``."""
    return gamma_flat(g, sample.dt) @ phi_map(T, sample.dt) @ one_step_upsilon(sample, bias, scheme)
