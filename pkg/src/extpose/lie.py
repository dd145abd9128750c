"""Closed-form SO(3) and SE_2(3) operations.

An extended pose holds orientation ``R``, velocity ``v`` and position ``p``
and embeds in SE_2(3) as the 5x5 matrix::

    [[R, v, p],
     [0, 1, 0],
     [0, 0, 1]]

Tangent vectors are 9-vectors ordered ``(phi, nu, rho)``: rotation, velocity,
position. Uncertainty is applied on the right, ``T = T_hat @ exp(xi)``.

Trigonometric coefficient functions switch to a Taylor series for small
angles. The series are carried to many terms and used up to
``SERIES_THRESHOLD`` because several closed forms (the Q-block ones in
particular) cancel catastrophically well above 1e-4 rad.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SERIES_THRESHOLD = 0.5
_N_TERMS = 12
# tr(R) + 1 below this means the rotation angle is within ~1e-3 rad of pi.
PI_BRANCH_TOL = 1e-6


class BranchError(ValueError):
    """Raised when a logarithm is requested too close to a rotation of pi."""


# --------------------------------------------------------------------------
# scalar coefficient functions


def _bernoulli(n_max):
    b = [Fraction(1)]
    for m in range(1, n_max + 1):
        acc = sum(math.comb(m + 1, k) * b[k] for k in range(m))
        b.append(-acc / (m + 1))
    return b


_B = _bernoulli(2 * _N_TERMS + 2)

# coefficient c_m of theta**(2m) in each series
_SERIES = {
    "sin_t": [(-1) ** m / math.factorial(2 * m + 1) for m in range(_N_TERMS)],
    "one_minus_cos_t2": [(-1) ** m / math.factorial(2 * m + 2) for m in range(_N_TERMS)],
    "t_minus_sin_t3": [(-1) ** m / math.factorial(2 * m + 3) for m in range(_N_TERMS)],
    "q_second": [(-1) ** m / math.factorial(2 * m + 4) for m in range(_N_TERMS)],
    "q_third": [(-1) ** m * (m + 1) / math.factorial(2 * m + 5) for m in range(_N_TERMS)],
    "jinv": [float((-1) ** m * _B[2 * m + 2] / math.factorial(2 * m + 2)) for m in range(_N_TERMS)],
    # theta / (2 sin theta)
    "half_t_over_sin": [
        float((-1) ** (m + 1) * (4**m - 2) * _B[2 * m] / math.factorial(2 * m) / 2)
        for m in range(_N_TERMS)
    ],
}


def _horner(coeffs, t2):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * t2 + c
    return acc


def _closed(name, t):
    s, c = math.sin(t), math.cos(t)
    if name == "sin_t":
        return s / t
    if name == "one_minus_cos_t2":
        return (1.0 - c) / t**2
    if name == "t_minus_sin_t3":
        return (t - s) / t**3
    if name == "q_second":
        return (t * t + 2.0 * c - 2.0) / (2.0 * t**4)
    if name == "q_third":
        return (2.0 * t - 3.0 * s + t * c) / (2.0 * t**5)
    if name == "jinv":
        return 1.0 / t**2 - (1.0 + c) / (2.0 * t * s)
    if name == "half_t_over_sin":
        return t / (2.0 * s)
    raise KeyError(name)


def coefficient(name: str, theta: float, threshold: float = SERIES_THRESHOLD) -> float:
    """Evaluate a named trigonometric coefficient, series below ``threshold``.

    Names: ``sin_t`` (sin t / t), ``one_minus_cos_t2`` ((1 - cos t) / t^2),
    ``t_minus_sin_t3`` ((t - sin t) / t^3), ``q_second``
    ((t^2 + 2 cos t - 2) / (2 t^4)), ``q_third``
    ((2t - 3 sin t + t cos t) / (2 t^5)), ``jinv``
    (1/t^2 - (1 + cos t) / (2 t sin t)) and ``half_t_over_sin`` (t / (2 sin t)).
    """
    theta = abs(float(theta))
    if theta < threshold:
        return _horner(_SERIES[name], theta * theta)
    return _closed(name, theta)


# --------------------------------------------------------------------------
# SO(3)


def skew(w) -> np.ndarray:
    """3x3 cross-product matrix of ``w``."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(W) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    t = math.sqrt(phi @ phi)
    K = skew(phi)
    return np.eye(3) + coefficient("sin_t", t) * K + coefficient("one_minus_cos_t2", t) * (K @ K)


def so3_angle(R) -> float:
    """Rotation angle in [0, pi], computed with atan2 for accuracy near 0."""
    w = unskew(R - R.T)
    return math.atan2(0.5 * math.sqrt(w @ w), 0.5 * (np.trace(R) - 1.0))


def so3_log(R) -> np.ndarray:
    """Principal logarithm of a rotation matrix.

    Raises:
        BranchError: if the rotation angle is too close to pi for the axis to
            be recovered without an arbitrary sign choice.
    """
    R = np.asarray(R, dtype=float)
    if np.trace(R) + 1.0 < PI_BRANCH_TOL:
        raise BranchError("rotation angle too close to pi for a unique logarithm")
    w = unskew(R - R.T)
    t = so3_angle(R)
    return coefficient("half_t_over_sin", t) * w


def so3_left_jacobian(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    t = math.sqrt(phi @ phi)
    K = skew(phi)
    return np.eye(3) + coefficient("one_minus_cos_t2", t) * K + coefficient("t_minus_sin_t3", t) * (K @ K)


def so3_left_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    t = math.sqrt(phi @ phi)
    if t >= 2.0 * math.pi - 1e-9:
        raise ValueError("inverse Jacobian undefined for |phi| >= 2 pi")
    K = skew(phi)
    return np.eye(3) - 0.5 * K + coefficient("jinv", t) * (K @ K)


def so3_right_jacobian(phi) -> np.ndarray:
    return so3_left_jacobian(-np.asarray(phi, dtype=float))


def so3_right_jacobian_inv(phi) -> np.ndarray:
    return so3_left_jacobian_inv(-np.asarray(phi, dtype=float))


def check_rotation(R, tol: float = 1e-9) -> None:
    R = np.asarray(R)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if np.abs(R @ R.T - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix is not a rotation")


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition through the SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


# --------------------------------------------------------------------------
# SE_2(3)


@dataclass(frozen=True, eq=False)
class ExtendedPose:
    """Orientation, velocity and position; an element of SE_2(3)."""

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.array(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(3))
        object.__setattr__(self, "p", np.array(self.p, dtype=float).reshape(3))
        for arr in (self.R, self.v, self.p):
            arr.flags.writeable = False

    @classmethod
    def identity(cls) -> "ExtendedPose":
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> "ExtendedPose":
        M = np.asarray(M, dtype=float)
        if M.shape != (5, 5) or not np.allclose(M[3:], np.hstack([np.zeros((2, 3)), np.eye(2)])):
            raise ValueError("not an SE_2(3) matrix")
        return cls(M[:3, :3], M[:3, 3], M[:3, 4])

    def matrix(self) -> np.ndarray:
        M = np.eye(5)
        M[:3, :3] = self.R
        M[:3, 3] = self.v
        M[:3, 4] = self.p
        return M

    def inverse(self) -> "ExtendedPose":
        Rt = self.R.T
        return ExtendedPose(Rt, -Rt @ self.v, -Rt @ self.p)

    def __matmul__(self, other: "ExtendedPose") -> "ExtendedPose":
        if not isinstance(other, ExtendedPose):
            return NotImplemented
        return ExtendedPose(self.R @ other.R, self.R @ other.v + self.v, self.R @ other.p + self.p)

    def orthonormalized(self) -> "ExtendedPose":
        return ExtendedPose(orthonormalize(self.R), self.v, self.p)

    def allclose(self, other: "ExtendedPose", atol: float = 1e-9) -> bool:
        return (
            np.allclose(self.R, other.R, atol=atol, rtol=0)
            and np.allclose(self.v, other.v, atol=atol, rtol=0)
            and np.allclose(self.p, other.p, atol=atol, rtol=0)
        )

    def __repr__(self):
        return f"ExtendedPose(R={self.R.tolist()}, v={self.v.tolist()}, p={self.p.tolist()})"


def split(xi):
    xi = np.asarray(xi, dtype=float).reshape(9)
    return xi[0:3], xi[3:6], xi[6:9]


def wedge(xi) -> np.ndarray:
    """9-vector to the 5x5 Lie algebra matrix."""
    phi, nu, rho = split(xi)
    X = np.zeros((5, 5))
    X[:3, :3] = skew(phi)
    X[:3, 3] = nu
    X[:3, 4] = rho
    return X


def vee(X) -> np.ndarray:
    X = np.asarray(X)
    return np.concatenate([unskew(X[:3, :3]), X[:3, 3], X[:3, 4]])


def se23_exp(xi) -> ExtendedPose:
    phi, nu, rho = split(xi)
    J = so3_left_jacobian(phi)
    return ExtendedPose(so3_exp(phi), J @ nu, J @ rho)


def se23_log(T: ExtendedPose) -> np.ndarray:
    phi = so3_log(T.R)
    Jinv = so3_left_jacobian_inv(phi)
    return np.concatenate([phi, Jinv @ T.v, Jinv @ T.p])


def _q_block(phi, u) -> np.ndarray:
    t = math.sqrt(phi @ phi)
    P = skew(phi)
    U = skew(u)
    PU, UP = P @ U, U @ P
    PUP = PU @ P
    PPU = P @ PU
    UPP = UP @ P
    return (
        0.5 * U
        + coefficient("t_minus_sin_t3", t) * (PU + UP + PUP)
        + coefficient("q_second", t) * (PPU + UPP - 3.0 * PUP)
        + coefficient("q_third", t) * (PUP @ P + P @ PUP)
    )


def se23_left_jacobian(xi) -> np.ndarray:
    """Left Jacobian: ``exp(xi + d) = exp(J d) exp(xi)`` to first order."""
    phi, nu, rho = split(xi)
    J = so3_left_jacobian(phi)
    out = np.zeros((9, 9))
    out[0:3, 0:3] = out[3:6, 3:6] = out[6:9, 6:9] = J
    out[3:6, 0:3] = _q_block(phi, nu)
    out[6:9, 0:3] = _q_block(phi, rho)
    return out


def se23_left_jacobian_inv(xi) -> np.ndarray:
    phi, nu, rho = split(xi)
    Ji = so3_left_jacobian_inv(phi)
    out = np.zeros((9, 9))
    out[0:3, 0:3] = out[3:6, 3:6] = out[6:9, 6:9] = Ji
    out[3:6, 0:3] = -Ji @ _q_block(phi, nu) @ Ji
    out[6:9, 0:3] = -Ji @ _q_block(phi, rho) @ Ji
    return out


def se23_right_jacobian(xi) -> np.ndarray:
    """Right Jacobian: ``exp(xi + d) = exp(xi) exp(J d)`` to first order."""
    return se23_left_jacobian(-np.asarray(xi, dtype=float))


def se23_right_jacobian_inv(xi) -> np.ndarray:
    """``log(exp(xi) exp(eta)) = xi + J^{-1} eta + O(|eta|^2)``."""
    return se23_left_jacobian_inv(-np.asarray(xi, dtype=float))


def adjoint(T: ExtendedPose) -> np.ndarray:
    R = T.R
    out = np.zeros((9, 9))
    out[0:3, 0:3] = out[3:6, 3:6] = out[6:9, 6:9] = R
    out[3:6, 0:3] = skew(T.v) @ R
    out[6:9, 0:3] = skew(T.p) @ R
    return out


def curlywedge(xi) -> np.ndarray:
    """9x9 matrix with ``wedge(curlywedge(a) @ b) = [wedge(a), wedge(b)]``."""
    phi, nu, rho = split(xi)
    P = skew(phi)
    out = np.zeros((9, 9))
    out[0:3, 0:3] = out[3:6, 3:6] = out[6:9, 6:9] = P
    out[3:6, 0:3] = skew(nu)
    out[6:9, 0:3] = skew(rho)
    return out
