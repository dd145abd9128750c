"""Exact preintegration in a local frame attached to the rotating Earth.

In a North-East-Down frame that rotates with the Earth the kinematics gain a
transport term on the attitude, Coriolis and centrifugal accelerations:

    R' = -Omega^ R + R (omega_m)^,
    v' = R a_m + g - 2 Omega^ v - Omega^2 p,
    p' = v.

The auxiliary state ``(R, v + Omega x p, p)`` follows the same group-affine
structure as the flat model with a modified gravity factor ``Gamma'``. The
body increment ``Upsilon`` and its covariance are therefore unchanged and
only the prediction and factor extraction differ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from extpose.imu import DEFAULT_GRAVITY, EULER, ImuBias, ImuSample, one_step_upsilon, phi_map
from extpose.lie import SERIES_THRESHOLD, ExtendedPose, se23_log, skew, so3_exp, so3_left_jacobian

EARTH_RATE = 7.292e-5  # rad/s
NED_GRAVITY = np.array([0.0, 0.0, 9.81])
MAX_RATE = 1e-3
_N_TERMS = 12


@dataclass(frozen=True)
class EarthModel:
    """Gravity and Earth rotation vector, both in the local navigation frame."""

    g: np.ndarray = field(default_factory=lambda: NED_GRAVITY.copy())
    omega_earth: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "g", np.array(self.g, dtype=float).reshape(3))
        object.__setattr__(self, "omega_earth", np.array(self.omega_earth, dtype=float).reshape(3))
        if np.linalg.norm(self.omega_earth) > MAX_RATE:
            raise ValueError("Earth rotation rate above 1e-3 rad/s")

    @classmethod
    def at_latitude(cls, latitude: float, g=NED_GRAVITY) -> "EarthModel":
        """NED model at ``latitude`` (radians)."""
        return cls(g, earth_rotation_vector(latitude))

    @classmethod
    def flat(cls, g=DEFAULT_GRAVITY) -> "EarthModel":
        return cls(g, np.zeros(3))

    def without_rotation(self) -> "EarthModel":
        return EarthModel(self.g, np.zeros(3))


@dataclass(frozen=True, eq=False)
class GammaFactors:
    gamma_R: np.ndarray
    gamma_v: np.ndarray
    gamma_p: np.ndarray
    dt: float

    def as_pose(self) -> ExtendedPose:
        return ExtendedPose(self.gamma_R, self.gamma_v, self.gamma_p)


def earth_rotation_vector(latitude: float) -> np.ndarray:
    """Earth rotation in NED coordinates at ``latitude`` (radians)."""
    if abs(latitude) > math.pi / 2 + 1e-12:
        raise ValueError("latitude must lie in [-pi/2, pi/2]")
    return EARTH_RATE * np.array([math.cos(latitude), 0.0, -math.sin(latitude)])


def aux_state(T: ExtendedPose, earth: EarthModel) -> ExtendedPose:
    """``(R, v + Omega x p, p)``."""
    return ExtendedPose(T.R, T.v + skew(earth.omega_earth) @ T.p, T.p)


def aux_state_inverse(T: ExtendedPose, earth: EarthModel) -> ExtendedPose:
    return ExtendedPose(T.R, T.v - skew(earth.omega_earth) @ T.p, T.p)


# a(t)/t^3 and b(t)/t^4 as power series in x = |Omega| t
_A_SERIES = np.array([(-1) ** n * 2 * n / math.factorial(2 * n + 1) for n in range(1, _N_TERMS + 1)])
_B_SERIES = np.array([(-1) ** m * (2 * m - 1) / math.factorial(2 * m) for m in range(2, _N_TERMS + 2)])


def _poly(coeffs, x2):
    out = 0.0
    for c in coeffs[::-1]:
        out = out * x2 + c
    return out


def position_coefficients(phi: float, t: float, threshold: float = SERIES_THRESHOLD):
    """Coefficients ``(a, b)`` of ``Omega^`` and ``Omega^2`` in ``Gamma^p``.

    ``a = (x cos x - sin x) / phi^3`` and
    ``b = (x^2/2 - cos x - x sin x + 1) / phi^4`` with ``x = phi t``. Both
    cancel catastrophically for small ``x``, where a series is used.
    """
    x = phi * t
    if x < threshold:
        x2 = x * x
        return t**3 * _poly(_A_SERIES, x2), t**4 * _poly(_B_SERIES, x2)
    c, s = math.cos(x), math.sin(x)
    return (x * c - s) / phi**3, (0.5 * x * x - c - x * s + 1.0) / phi**4


def gamma_rotating(earth: EarthModel, dt: float) -> GammaFactors:
    """Closed-form gravity factors of the auxiliary-state model over ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    Om, g = earth.omega_earth, earth.g
    phi = float(np.linalg.norm(Om))
    a, b = position_coefficients(phi, dt)
    W = skew(Om)
    gamma_R = so3_exp(-dt * Om)
    gamma_v = so3_left_jacobian(-dt * Om) @ (dt * g)
    gamma_p = (0.5 * dt * dt * np.eye(3) + a * W + b * W @ W) @ g
    return GammaFactors(gamma_R, gamma_v, gamma_p, dt)


def integrate_step_rotating(T: ExtendedPose, sample: ImuSample, earth: EarthModel, bias: ImuBias = ImuBias(),
                            scheme: str = EULER, gamma: ExtendedPose | None = None) -> ExtendedPose:
    """One step of the exact rotating-Earth discrete kinematics.

    ``gamma`` may carry a precomputed ``gamma_rotating(earth, dt).as_pose()``.
    """
    Ta = aux_state(T, earth)
    G = gamma_rotating(earth, sample.dt).as_pose() if gamma is None else gamma
    return aux_state_inverse(G @ phi_map(Ta, sample.dt) @ one_step_upsilon(sample, bias, scheme), earth)


def predict_rotating(delta, Ti: ExtendedPose, earth: EarthModel, upsilon: ExtendedPose | None = None) -> ExtendedPose:
    """State at ``t_j`` from the state at ``t_i`` and a preintegrated increment."""
    U = delta.upsilon if upsilon is None else upsilon
    t = delta.dt_total
    gm = gamma_rotating(earth, t)
    W = skew(earth.omega_earth)
    Ri, vi, pi = Ti.R, Ti.v, Ti.p
    wi = vi + W @ pi
    Rj = gm.gamma_R @ Ri @ U.R
    pj = gm.gamma_p + gm.gamma_R @ (Ri @ U.p + wi * t + pi)
    vj = gm.gamma_v + gm.gamma_R @ (Ri @ U.v + wi) - W @ pj
    return ExtendedPose(Rj, vj, pj)


def factors_rotating(Ti: ExtendedPose, Tj: ExtendedPose, earth: EarthModel, dt_ij: float) -> ExtendedPose:
    """State-side expression of ``(Delta R, Delta v, Delta p)`` between two states."""
    gm = gamma_rotating(earth, dt_ij)
    W = skew(earth.omega_earth)
    Ri, vi, pi = Ti.R, Ti.v, Ti.p
    wi = vi + W @ pi
    GRt = gm.gamma_R.T
    dR = (gm.gamma_R @ Ri).T @ Tj.R
    dv = Ri.T @ (GRt @ (Tj.v + W @ Tj.p - gm.gamma_v) - wi)
    dp = Ri.T @ (GRt @ (Tj.p - gm.gamma_p) - wi * dt_ij - pi)
    return ExtendedPose(dR, dv, dp)


def residual_rotating(delta, Ti: ExtendedPose, Tj: ExtendedPose, earth: EarthModel,
                      upsilon: ExtendedPose | None = None) -> np.ndarray:
    """``log(Upsilon_hat^-1 Upsilon(T_i, T_j))``; whitened with the flat covariance."""
    U = delta.upsilon if upsilon is None else upsilon
    return se23_log(U.inverse() @ factors_rotating(Ti, Tj, earth, delta.dt_total))
