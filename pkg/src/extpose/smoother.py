"""Sliding-window smoother over keyframe extended poses and IMU biases.

Keyframes are linked by preintegration, bias random-walk, relative
translation and zero-upward-velocity factors. The window is re-solved with a
damped Gauss-Newton (Levenberg-Marquardt) iteration after each insertion and
keyframes older than the lag are folded into a Gaussian prior through the
Schur complement of the linearized system.

States are perturbed on the right: ``T exp(xi)`` for the pose and an additive
step for the bias, giving a 15-dimensional tangent space per keyframe.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from extpose.imu import CONSUMER_IMU, ImuBias, ImuNoiseSpec, ImuSample, discretize_noise, f_matrix, phi_map
from extpose.lie import ExtendedPose, adjoint, se23_exp, se23_log, se23_right_jacobian, se23_right_jacobian_inv, skew
from extpose.preintegration import PreintegratedDelta, corrected_upsilon, preintegrate, sqrt_information
from extpose.rng import sample_generator
from extpose.rotating_earth import EarthModel, aux_state, gamma_rotating, predict_rotating
from extpose.simulation import TrajectorySpec, synthesize_imu

HUBER_K = 1.345
FD_STEP = 1e-6


# --------------------------------------------------------------------------
# variables


@dataclass(frozen=True, eq=False)
class KeyframeState:
    pose: ExtendedPose
    bias: ImuBias = field(default_factory=ImuBias)
    stamp: float = 0.0

    dim = 15

    def retract(self, delta) -> "KeyframeState":
        delta = np.asarray(delta, dtype=float)
        return KeyframeState(self.pose @ se23_exp(delta[0:9]), self.bias + delta[9:15], self.stamp)

    def local(self, ref: "KeyframeState") -> np.ndarray:
        """Tangent vector taking ``ref`` to ``self``."""
        return np.concatenate([se23_log(ref.pose.inverse() @ self.pose), self.bias.vector() - ref.bias.vector()])


@dataclass(frozen=True, eq=False)
class VectorState:
    """Plain vector variable, used for linear-Gaussian problems."""

    x: np.ndarray
    stamp: float = 0.0

    @property
    def dim(self) -> int:
        return int(np.size(self.x))

    def retract(self, delta) -> "VectorState":
        return VectorState(np.asarray(self.x, dtype=float) + np.asarray(delta, dtype=float), self.stamp)

    def local(self, ref: "VectorState") -> np.ndarray:
        return np.asarray(self.x, dtype=float) - np.asarray(ref.x, dtype=float)


# --------------------------------------------------------------------------
# factors


def huber_weight(s: float, k: float) -> float:
    """IRLS weight on the squared residual for a whitened residual norm ``s``."""
    return 1.0 if s <= k else k / s


def huber_cost(s: float, k: float) -> float:
    return 0.5 * s * s if s <= k else k * s - 0.5 * k * k


class Factor:
    """Base class. Subclasses define ``keys``, ``_residual`` and optionally ``_jacobians``.

    ``_residual`` returns the whitened, non-robust residual. ``robust`` is
    ``None`` or a Huber threshold on the whitened residual norm.
    """

    kind = "factor"
    keys: tuple = ()
    robust: float | None = None

    def _residual(self, values) -> np.ndarray:
        raise NotImplementedError

    def _jacobians(self, values, r):
        return numerical_jacobians(self, values)

    def _linearize(self, values):
        r = self._residual(values)
        return r, self._jacobians(values, r)

    def cost(self, values) -> float:
        s = float(np.linalg.norm(self._residual(values)))
        return 0.5 * s * s if self.robust is None else huber_cost(s, self.robust)


def numerical_jacobians(f: Factor, values, h: float = FD_STEP):
    """Central differences of the whitened residual in retraction coordinates."""
    out = []
    for key in f.keys:
        x = values[key]
        J = np.zeros((len(f._residual(values)), x.dim))
        for i in range(x.dim):
            d = np.zeros(x.dim)
            d[i] = h
            plus = dict(values)
            plus[key] = x.retract(d)
            minus = dict(values)
            minus[key] = x.retract(-d)
            J[:, i] = (f._residual(plus) - f._residual(minus)) / (2 * h)
        out.append(J)
    return out


def factor_residual(f: Factor, values, robust: bool = True):
    """Whitened residual and Jacobians with respect to each connected state.

    With ``robust`` the Huber weight is folded in (square root on residual and
    Jacobians), which is the form the optimizer consumes.
    """
    r, Js = f._linearize(values)
    if robust and f.robust is not None:
        w = math.sqrt(huber_weight(float(np.linalg.norm(r)), f.robust))
        r = w * r
        Js = [w * J for J in Js]
    return r, Js


class PriorFactor(Factor):
    kind = "prior"

    def __init__(self, key, state: KeyframeState, cov):
        self.keys = (key,)
        self.state = state
        self.W = sqrt_information(cov)

    def _residual(self, values):
        return self.W @ values[self.keys[0]].local(self.state)

    def _jacobians(self, values, r):
        e = values[self.keys[0]].local(self.state)
        J = np.eye(15)
        J[0:9, 0:9] = se23_right_jacobian_inv(e[0:9])
        return [self.W @ J]


class PreintegrationFactor(Factor):
    """IMU increment between keyframes ``i`` and ``j`` on a flat or rotating Earth.

    The increment is corrected to the bias of keyframe ``i`` to first order.
    """

    kind = "preintegration"

    def __init__(self, i, j, delta: PreintegratedDelta, earth: EarthModel):
        self.keys = (i, j)
        self.delta = delta
        self.earth = earth
        self.W = sqrt_information(delta.cov)
        t = delta.dt_total
        # (Gamma Phi(.))^-1 applied to auxiliary states, with Gamma fixed per factor
        self._gamma_inv = gamma_rotating(earth, t).as_pose().inverse()
        self._F = f_matrix(t)

    def _parts(self, values):
        si, sj = values[self.keys[0]], values[self.keys[1]]
        U = corrected_upsilon(self.delta, si.bias)
        t = self.delta.dt_total
        X = phi_map(aux_state(si.pose, self.earth), t).inverse() @ self._gamma_inv @ aux_state(sj.pose, self.earth)
        return si, sj, U, X, se23_log(U.inverse() @ X)

    def _residual(self, values):
        return self.W @ self._parts(values)[4]

    def _jacobians(self, values, r):
        return self._linearize(values)[1]

    def _linearize(self, values):
        si, sj, U, X, e = self._parts(values)
        Jinv = se23_right_jacobian_inv(e)
        Om = self.earth.omega_earth

        def aux_map(R):
            # aux(T exp(xi)) = aux(T) exp(M xi) with the Coriolis coupling in M
            M = np.eye(9)
            M[3:6, 6:9] = skew(R.T @ Om)
            return M

        F = self._F
        Ji = np.zeros((9, 15))
        Ji[:, 0:9] = -Jinv @ adjoint(X.inverse()) @ F @ aux_map(si.pose.R)
        db = si.bias.vector() - self.delta.bias_ref.vector()
        Jb = self.delta.bias_jacobian
        Ji[:, 9:15] = -Jinv @ adjoint(se23_exp(e).inverse()) @ se23_right_jacobian(Jb @ db) @ Jb
        Jj = np.zeros((9, 15))
        Jj[:, 0:9] = Jinv @ aux_map(sj.pose.R)
        return self.W @ e, [self.W @ Ji, self.W @ Jj]


class BiasRandomWalkFactor(Factor):
    kind = "bias_random_walk"

    def __init__(self, i, j, cov):
        self.keys = (i, j)
        self.W = sqrt_information(cov)

    def _residual(self, values):
        return self.W @ (values[self.keys[1]].bias.vector() - values[self.keys[0]].bias.vector())

    def _jacobians(self, values, r):
        Ji = np.zeros((6, 15))
        Ji[:, 9:15] = -self.W
        Jj = np.zeros((6, 15))
        Jj[:, 9:15] = self.W
        return [Ji, Jj]


class RelativeTranslationFactor(Factor):
    """``R_i^T (p_j - p_i)`` against a measured displacement in frame ``i``."""

    kind = "relative_translation"

    def __init__(self, i, j, measured, sigma: float = 0.2, huber: float | None = HUBER_K):
        self.keys = (i, j)
        self.measured = np.asarray(measured, dtype=float).reshape(3)
        self.sigma = float(sigma)
        self.robust = huber

    def _residual(self, values):
        Ti, Tj = values[self.keys[0]].pose, values[self.keys[1]].pose
        return (Ti.R.T @ (Tj.p - Ti.p) - self.measured) / self.sigma

    def _jacobians(self, values, r):
        Ti, Tj = values[self.keys[0]].pose, values[self.keys[1]].pose
        d = Ti.R.T @ (Tj.p - Ti.p)
        Ji = np.zeros((3, 15))
        Ji[:, 0:3] = skew(d)
        Ji[:, 6:9] = -np.eye(3)
        Jj = np.zeros((3, 15))
        Jj[:, 6:9] = Ti.R.T @ Tj.R
        return [Ji / self.sigma, Jj / self.sigma]


class ZeroUpVelocityFactor(Factor):
    """Vertical body-frame velocity ``(R^T v)_z`` close to zero, as for a car."""

    kind = "zero_up_velocity"

    def __init__(self, i, sigma: float = 1.0):
        self.keys = (i,)
        self.sigma = float(sigma)

    def _residual(self, values):
        T = values[self.keys[0]].pose
        return np.array([(T.R.T @ T.v)[2] / self.sigma])

    def _jacobians(self, values, r):
        T = values[self.keys[0]].pose
        u = T.R.T @ T.v
        J = np.zeros((1, 15))
        J[0, 0:3] = skew(u)[2]
        J[0, 5] = 1.0
        return [J / self.sigma]


class LinearFactor(Factor):
    """``W (sum_k A_k x_k - z)`` over vector states."""

    kind = "linear"

    def __init__(self, keys, mats, z, sqrt_info):
        self.keys = tuple(keys)
        self.mats = [np.atleast_2d(np.asarray(A, dtype=float)) for A in mats]
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        self.W = np.atleast_2d(np.asarray(sqrt_info, dtype=float))

    def _residual(self, values):
        return self.W @ (sum(A @ values[k].x for A, k in zip(self.mats, self.keys)) - self.z)

    def _jacobians(self, values, r):
        return [self.W @ A for A in self.mats]


class MarginalPrior(Factor):
    """Quadratic summary ``0.5 d^T H d + b^T d`` of marginalized information.

    ``d`` stacks each state's tangent offset from its linearization point.
    The information ``H`` is factored through its eigendecomposition, keeping
    directions above a relative floor, so that ``0.5 |S d + c|^2`` reproduces
    the quadratic up to a constant.
    """

    kind = "marginal_prior"

    def __init__(self, keys, lin_values, H, b, rel_floor: float = 1e-12):
        self.keys = tuple(keys)
        self.lin = [lin_values[k] for k in self.keys]
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        keep = w > rel_floor * max(w.max(), 0.0) if w.size else w > 0
        self.info = H
        self.S = np.sqrt(w[keep])[:, None] * V[:, keep].T
        self.c = (V[:, keep].T @ b) / np.sqrt(w[keep])

    def _offset(self, values):
        return np.concatenate([values[k].local(x0) for k, x0 in zip(self.keys, self.lin)])

    def _residual(self, values):
        return self.S @ self._offset(values) + self.c

    def _jacobians(self, values, r):
        d = self._offset(values)
        blocks = []
        off = 0
        for k, x0 in zip(self.keys, self.lin):
            n = values[k].dim
            J = np.eye(n)
            if isinstance(values[k], KeyframeState):
                J[0:9, 0:9] = se23_right_jacobian_inv(d[off:off + 9])
            blocks.append(self.S[:, off:off + n] @ J)
            off += n
        return blocks


# --------------------------------------------------------------------------
# window, optimizer, marginalization


@dataclass
class SlidingWindow:
    """Live keyframes (insertion ordered) and the factors that reference them."""

    lag: float = 20.0
    states: dict = field(default_factory=dict)
    factors: list = field(default_factory=list)

    def add_state(self, key, state) -> None:
        if key in self.states:
            raise ValueError(f"state {key!r} already in the window")
        self.states[key] = state

    def add_factor(self, f: Factor) -> None:
        missing = [k for k in f.keys if k not in self.states]
        if missing:
            raise ValueError(f"factor references unknown states {missing}")
        self.factors.append(f)

    def cost(self, values=None) -> float:
        values = self.states if values is None else values
        return float(sum(f.cost(values) for f in self.factors))


@dataclass
class OptimizeReport:
    iterations: int
    initial_cost: float
    final_cost: float
    costs: list
    converged: bool


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


def _layout(states):
    offsets, n = {}, 0
    for k, s in states.items():
        offsets[k] = n
        n += s.dim
    return offsets, n


def linear_system(factors, values, keys=None):
    """Gauss-Newton ``H = J^T J`` and ``g = J^T r`` over ``keys`` (default all).

    Returns:
        ``(H, g, offsets, cost)`` with the robustified cost at ``values``.
    """
    keys = list(values) if keys is None else list(keys)
    sub = {k: values[k] for k in keys}
    offsets, n = _layout(sub)
    H = np.zeros((n, n))
    g = np.zeros(n)
    cost = 0.0
    for f in factors:
        r, Js = f._linearize(values)
        s = float(np.linalg.norm(r))
        if f.robust is None:
            cost += 0.5 * s * s
        else:
            cost += huber_cost(s, f.robust)
            w = math.sqrt(huber_weight(s, f.robust))
            r = w * r
            Js = [w * J for J in Js]
        for ka, Ja in zip(f.keys, Js):
            ia = offsets[ka]
            g[ia:ia + Ja.shape[1]] += Ja.T @ r
            for kb, Jb in zip(f.keys, Js):
                ib = offsets[kb]
                H[ia:ia + Ja.shape[1], ib:ib + Jb.shape[1]] += Ja.T @ Jb
    return H, g, offsets, cost


def optimize(window: SlidingWindow, max_iters: int = 10, tol: float = 1e-10, lam: float = 1e-8) -> OptimizeReport:
    """Levenberg-Marquardt on the window; accepted steps never raise the cost.

    Terminates when the step norm drops below ``tol`` or after ``max_iters``
    linear solves.

    Raises:
        RankDeficiencyError: if the damped normal equations cannot be solved.
    """
    if not window.states:
        raise ValueError("empty window")
    values = dict(window.states)
    H, g, offsets, cost = linear_system(window.factors, values)
    costs = [cost]
    initial = cost
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        damp = lam * np.diag(H)
        try:
            step = -cho_solve(cho_factor(H + np.diag(damp)), g)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("normal equations are singular beyond damping") from None
        small = np.linalg.norm(step) < tol
        trial = {k: s.retract(step[offsets[k]:offsets[k] + s.dim]) for k, s in values.items()}
        if small:
            # not worth a re-linearization; keep it only if it does not hurt
            new_cost = window.cost(trial)
            if new_cost <= cost:
                values, cost = trial, new_cost
                costs.append(cost)
            converged = True
            break
        tH, tg, _, new_cost = linear_system(window.factors, trial)
        if new_cost <= cost:
            values, cost, H, g = trial, new_cost, tH, tg
            costs.append(cost)
            lam = max(lam / 10, 1e-12)
            if cost == 0.0:
                converged = True
                break
        else:
            lam *= 10
    window.states = values
    return OptimizeReport(it, initial, cost, costs, converged)


def marginalize(window: SlidingWindow, horizon: float | None = None) -> SlidingWindow:
    """Drop keyframes older than ``newest stamp - horizon`` and re-prior the rest.

    Factors touching dropped keyframes are linearized at the current estimate;
    the dropped block is eliminated with a Schur complement and the result is
    attached as a :class:`MarginalPrior` on the surviving neighbours.
    """
    horizon = window.lag if horizon is None else horizon
    if not window.states:
        return window
    newest = max(s.stamp for s in window.states.values())
    drop = [k for k, s in window.states.items() if s.stamp < newest - horizon - 1e-9]
    if not drop:
        return window
    dropset = set(drop)
    touching = [f for f in window.factors if dropset.intersection(f.keys)]
    kept_factors = [f for f in window.factors if not dropset.intersection(f.keys)]
    neighbours = []
    for f in touching:
        for k in f.keys:
            if k not in dropset and k not in neighbours:
                neighbours.append(k)
    order = drop + neighbours
    H, g, offsets, _ = linear_system(touching, window.states, order)
    nd = sum(window.states[k].dim for k in drop)
    Hdd, Hdk, Hkk = H[:nd, :nd], H[:nd, nd:], H[nd:, nd:]
    gd, gk = g[:nd], g[nd:]
    # pseudo-inverse keeps unobservable dropped directions from blowing up
    Hdd_inv = np.linalg.pinv(0.5 * (Hdd + Hdd.T), rcond=1e-12)
    Hm = Hkk - Hdk.T @ Hdd_inv @ Hdk
    bm = gk - Hdk.T @ Hdd_inv @ gd
    for k in drop:
        del window.states[k]
    window.factors = kept_factors
    if neighbours:
        window.factors.append(MarginalPrior(neighbours, window.states, Hm, bm))
    return window


# --------------------------------------------------------------------------
# configuration and demo


@dataclass
class SmootherConfig:
    """Settings of the smoother demo; loadable from an INI file.

    INI layout (all keys optional)::

        [smoother]
        lag = 20            ; seconds kept in the window
        rate = 4            ; keyframe insertion rate, Hz
        rel_sigma = 0.2     ; relative-translation noise per axis, m
        huber = 1.345       ; Huber threshold on the whitened residual
        zero_up_sigma = 1.0 ; zero-upward-velocity noise, m/s
        max_iters = 4
        earth = flat        ; flat or rotating
        [imu]
        rate = 100
        gyro_std = 7e-4     ; rad/(s sqrt Hz)
        acc_std = 1.9e-2    ; m/(s^2 sqrt Hz)
        gyro_bias_std = 4e-4
        acc_bias_std = 1.2e-2
        [run]
        duration = 60
        outlier_rate = 0.02
        outlier_std = 5.0
    """

    lag: float = 20.0
    rate: float = 4.0
    rel_sigma: float = 0.2
    huber: float = HUBER_K
    zero_up_sigma: float = 1.0
    max_iters: int = 4
    earth: str = "flat"
    imu_rate: float = 100.0
    gyro_std: float = CONSUMER_IMU["gyro_std"]
    acc_std: float = CONSUMER_IMU["acc_std"]
    gyro_bias_std: float = CONSUMER_IMU["gyro_bias_std"]
    acc_bias_std: float = CONSUMER_IMU["acc_bias_std"]
    duration: float = 60.0
    outlier_rate: float = 0.02
    outlier_std: float = 5.0
    zero_up: bool = True

    _INI = {
        "smoother": ("lag", "rate", "rel_sigma", "huber", "zero_up_sigma", "max_iters", "earth", "zero_up"),
        "imu": ("imu_rate", "gyro_std", "acc_std", "gyro_bias_std", "acc_bias_std"),
        "run": ("duration", "outlier_rate", "outlier_std"),
    }

    def validate(self) -> None:
        for name in ("lag", "rate", "rel_sigma", "huber", "zero_up_sigma", "imu_rate", "duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.earth not in ("flat", "rotating"):
            raise ValueError("earth must be 'flat' or 'rotating'")
        if not 0 <= self.outlier_rate < 1:
            raise ValueError("outlier_rate must lie in [0, 1)")
        steps = self.imu_rate / self.rate
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("imu rate must be a multiple of the keyframe rate")

    @classmethod
    def from_ini(cls, path) -> "SmootherConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(path):
            raise FileNotFoundError(path)
        kwargs = {}
        for section, names in cls._INI.items():
            if not parser.has_section(section):
                continue
            for key, value in parser.items(section):
                name = "imu_rate" if (section, key) == ("imu", "rate") else key
                if name not in names:
                    raise ValueError(f"unknown key {key!r} in [{section}]")
                if name == "earth":
                    kwargs[name] = value
                elif name == "zero_up":
                    kwargs[name] = parser.getboolean(section, key)
                else:
                    kwargs[name] = int(value) if name == "max_iters" else float(value)
        # [experiment] holds run-level defaults read by the command line
        unknown = set(parser.sections()) - set(cls._INI) - {"experiment"}
        if unknown:
            raise ValueError(f"unknown sections {sorted(unknown)}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def noisy_readings(samples, bias0: ImuBias, meas_cov, bias_rw_cov, rng):
    """Readings with a random-walk bias and white noise of covariance ``meas_cov``.

    Args:
        bias_rw_cov: 6x6 covariance of the bias increment per sample.

    Returns:
        ``(readings, biases)`` with the true bias vector of every sample.
    """
    std = np.sqrt(np.diag(meas_cov))
    rw_std = np.sqrt(np.diag(bias_rw_cov))
    b = bias0.vector()
    out, biases = [], []
    for s in samples:
        n = rng.standard_normal(6) * std
        out.append(ImuSample(s.omega_m + b[:3] + n[:3], s.acc_m + b[3:] + n[3:], s.dt))
        biases.append(b)
        b = b + rng.standard_normal(6) * rw_std
    return out, np.array(biases)


def dead_reckoning(T0: ExtendedPose, samples, earth: EarthModel, steps_per_kf: int):
    """IMU-only propagation with zero bias, returned at every keyframe."""
    out = [T0]
    T = T0
    for k in range(0, len(samples) - steps_per_kf + 1, steps_per_kf):
        d = preintegrate(samples[k:k + steps_per_kf])
        T = predict_rotating(d, T, earth)
        out.append(T)
    return out


def run_smoother(run, cfg: SmootherConfig, seed: int = 0, alpha: float = 1.0):
    """Fixed-lag smoothing of a synthetic run.

    Returns:
        Dict with keyframe times, true poses, smoothed poses (each taken when
        it leaves the window, or at the end), dead-reckoning poses and the
        final window.
    """
    cfg.validate()
    dt = run.dt
    steps = int(round(1.0 / (cfg.rate * dt)))
    earth = run.earth
    spec = ImuNoiseSpec.isotropic(cfg.gyro_std, cfg.acc_std, cfg.gyro_bias_std, cfg.acc_bias_std)
    meas, _ = discretize_noise(spec, dt)
    meas = alpha * meas
    _, rw = discretize_noise(spec, steps * dt)
    _, rw_step = discretize_noise(spec, dt)
    rng = sample_generator(seed, 0, stream=5)
    bias0 = ImuBias(rng.normal(scale=5e-4, size=3), rng.normal(scale=2e-2, size=3))
    samples, true_bias = noisy_readings(run.samples, bias0, meas, rw_step, rng)
    n_kf = min(len(samples) // steps, int(round(cfg.duration * cfg.rate)))
    kf_idx = [k * steps for k in range(n_kf + 1)]
    times = [float(run.times[i]) for i in kf_idx]
    truth = [run.poses[i] for i in kf_idx]

    window = SlidingWindow(lag=cfg.lag)
    prior_cov = np.diag([1e-6] * 3 + [1e-4] * 3 + [1e-4] * 3 + [1e-4] * 3 + [1e-2] * 3)
    # the vehicle starts at rest, so the initial velocity is null
    x0 = KeyframeState(ExtendedPose(truth[0].R, np.zeros(3), truth[0].p), ImuBias(), times[0])
    window.add_state(0, x0)
    window.add_factor(PriorFactor(0, x0, prior_cov))
    estimates = {}
    for k in range(1, n_kf + 1):
        seg = samples[kf_idx[k - 1]:kf_idx[k]]
        prev = window.states[k - 1]
        d = preintegrate(seg, prev.bias, meas)
        pred = predict_rotating(d, prev.pose, earth)
        window.add_state(k, KeyframeState(pred, prev.bias, times[k]))
        window.add_factor(PreintegrationFactor(k - 1, k, d, earth))
        window.add_factor(BiasRandomWalkFactor(k - 1, k, rw))
        disp = truth[k - 1].R.T @ (truth[k].p - truth[k - 1].p) + rng.normal(scale=cfg.rel_sigma, size=3)
        if rng.random() < cfg.outlier_rate:
            disp = disp + rng.normal(scale=cfg.outlier_std, size=3)
        window.add_factor(RelativeTranslationFactor(k - 1, k, disp, cfg.rel_sigma, cfg.huber))
        if cfg.zero_up:
            window.add_factor(ZeroUpVelocityFactor(k, cfg.zero_up_sigma))
        # Huber reweighting converges linearly; 1e-4 is far below the measurement noise
        optimize(window, max_iters=cfg.max_iters, tol=1e-4)
        for key, s in window.states.items():
            estimates[key] = s.pose
        marginalize(window, cfg.lag)
    dr = dead_reckoning(x0.pose, samples[:kf_idx[-1]], earth, steps)
    return dict(times=np.array(times), truth=truth, estimates=[estimates[k] for k in range(n_kf + 1)],
                dead_reckoning=dr, window=window, true_bias=true_bias)


def relative_translation_error(est, truth, gap: int) -> float:
    """RMS error of ``R_i^T (p_{i+gap} - p_i)`` against the truth."""
    errs = []
    for i in range(len(truth) - gap):
        de = est[i].R.T @ (est[i + gap].p - est[i].p)
        dt_ = truth[i].R.T @ (truth[i + gap].p - truth[i].p)
        errs.append(np.sum((de - dt_) ** 2))
    return float(math.sqrt(np.mean(errs))) if errs else 0.0


def window_chi2_per_dof(window: SlidingWindow) -> float:
    """Whitened chi-square over the window per degree of freedom.

    Degrees of freedom are residual dimensions minus state dimensions.
    """
    chi2, m = 0.0, 0
    for f in window.factors:
        r = f._residual(window.states)
        chi2 += float(r @ r)
        m += r.size
    n = sum(s.dim for s in window.states.values())
    return chi2 / max(m - n, 1)


def smoother_demo(cfg) -> "ExperimentResult":
    """Smoother against IMU-only dead reckoning on the synthetic car path.

    Args:
        cfg: an ``ExperimentConfig``. ``extra["config"]`` may name an INI file
            with :class:`SmootherConfig` settings; ``duration`` and ``dt``
            override the run length and IMU period.
    """
    from extpose.experiments import ExperimentResult

    scfg = SmootherConfig.from_ini(cfg.extra["config"]) if cfg.extra.get("config") else SmootherConfig()
    if cfg.duration:
        scfg = replace(scfg, duration=cfg.duration)
    if cfg.dt:
        scfg = replace(scfg, imu_rate=1.0 / cfg.dt)
    scfg.validate()
    earth = EarthModel.at_latitude(math.radians(cfg.latitude)) if scfg.earth == "rotating" else EarthModel.flat()
    run = synthesize_imu(TrajectorySpec("waypoint_spline"), earth, dt=1.0 / scfg.imu_rate)
    out = run_smoother(run, scfg, cfg.seed, cfg.alpha)
    rows = []
    se_s, se_d = [], []
    for t, T, E, D in zip(out["times"], out["truth"], out["estimates"], out["dead_reckoning"]):
        es = float(np.linalg.norm(E.p - T.p))
        ed = float(np.linalg.norm(D.p - T.p))
        se_s.append(es * es)
        se_d.append(ed * ed)
        rows.append(dict(t=t, x_true=T.p[0], y_true=T.p[1], z_true=T.p[2], x_est=E.p[0], y_est=E.p[1],
                         z_est=E.p[2], err_smoother=es, err_dead_reckoning=ed))
    rmse_s, rmse_d = math.sqrt(np.mean(se_s)), math.sqrt(np.mean(se_d))
    gap = int(round(10 * scfg.rate))
    summary = dict(
        rmse_smoother=rmse_s,
        rmse_dead_reckoning=rmse_d,
        rel_err_10s_smoother=relative_translation_error(out["estimates"], out["truth"], gap),
        rel_err_10s_dead_reckoning=relative_translation_error(out["dead_reckoning"], out["truth"], gap),
        chi2_per_dof=window_chi2_per_dof(out["window"]),
        keyframes=len(rows),
        earth=scfg.earth,
    )
    checks = dict(smoother_beats_dead_reckoning=rmse_s <= rmse_d)
    cols = ["t", "x_true", "y_true", "z_true", "x_est", "y_est", "z_est", "err_smoother", "err_dead_reckoning"]
    return ExperimentResult(cols, rows, summary, checks)
