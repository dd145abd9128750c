"""Synthetic trajectories with IMU readings consistent with the discrete model.

A trajectory is described by its desired body-frame kinematics. Readings are
derived from them step by step, and the ground truth is then obtained by
integrating those readings with the exact discrete model. Re-integrating the
emitted readings therefore reproduces the emitted ground truth.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from extpose.imu import ImuBias, ImuSample
from extpose.lie import ExtendedPose, skew
from extpose.rotating_earth import EarthModel, gamma_rotating, integrate_step_rotating

STRAIGHT_ACCEL = "straight_accel"
WAYPOINT_SPLINE = "waypoint_spline"
CSV_POSES = "csv_poses"
STATIC = "static"
KINDS = (STRAIGHT_ACCEL, WAYPOINT_SPLINE, CSV_POSES, STATIC)

# Car-like default: stands still for 4 s, then drives about 1.7 km in 166 s.
# Knots are (time s, speed m/s, yaw rate rad/s, pitch rate rad/s).
DEFAULT_WAYPOINTS = (
    (0.0, 0.0, 0.0, 0.0),
    (4.0, 0.0, 0.0, 0.0),
    (12.0, 8.0, 0.0, 0.002),
    (22.0, 12.0, 0.08, 0.0),
    (32.0, 13.0, 0.0, -0.003),
    (44.0, 12.0, -0.12, 0.0),
    (54.0, 10.0, 0.0, 0.002),
    (66.0, 12.0, 0.1, 0.0),
    (78.0, 14.0, 0.0, 0.0),
    (90.0, 12.0, -0.06, -0.002),
    (102.0, 11.0, 0.0, 0.0),
    (114.0, 13.0, 0.12, 0.003),
    (126.0, 12.0, 0.0, 0.0),
    (138.0, 10.0, -0.1, -0.002),
    (150.0, 11.0, 0.0, 0.0),
    (158.0, 6.0, 0.05, 0.0),
    (166.0, 0.0, 0.0, 0.0),
)


@dataclass(frozen=True)
class TrajectorySpec:
    """Kind and parameters of a synthetic trajectory.

    Parameters by kind:
        straight_accel: ``a`` (m/s^2), ``K`` (steps).
        waypoint_spline: ``waypoints`` (time, speed, yaw rate, pitch rate).
        csv_poses: ``path`` to a file with columns t,x,y,z,roll,pitch,yaw.
        static: ``duration`` (s).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        need = {STRAIGHT_ACCEL: ("a", "K"), CSV_POSES: ("path",), STATIC: ("duration",)}.get(self.kind, ())
        missing = [k for k in need if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} needs parameters {missing}")


@dataclass(frozen=True, eq=False)
class SyntheticRun:
    """Ground truth ``poses[k]`` at ``times[k]``; ``samples[k]`` covers ``[t_k, t_k+1)``."""

    times: np.ndarray
    poses: list
    samples: list
    earth: EarthModel

    @property
    def dt(self) -> float:
        return self.samples[0].dt

    def pairs(self):
        """``(pose at step start, sample)`` for every step."""
        return list(zip(self.poses[:-1], self.samples))


def _integrate(T0, times, kinematics, earth):
    """Readings from body-frame kinematics, compensated for the current truth.

    ``kinematics(k, T)`` returns the body angular rate relative to the local
    frame and the acceleration relative to the local frame, in body axes, at
    ``times[k]`` given the current ground truth ``T``.
    """
    Om = earth.omega_earth
    W = skew(Om)
    poses, samples = [T0], []
    T = T0
    gammas = {}
    for k in range(len(times) - 1):
        dt = float(times[k + 1] - times[k])
        w_body, a_body = kinematics(k, T)
        R, v, p = T.R, T.v, T.p
        omega_m = w_body + R.T @ Om
        # specific force: remove gravity, add back Coriolis and centrifugal terms
        acc_m = a_body + R.T @ (2 * W @ v + W @ (W @ p) - earth.g)
        s = ImuSample(omega_m, acc_m, dt)
        key = round(dt, 12)
        if key not in gammas:
            gammas[key] = gamma_rotating(earth, dt).as_pose()
        T = integrate_step_rotating(T, s, earth, gamma=gammas[key])
        samples.append(s)
        poses.append(T)
    return SyntheticRun(np.asarray(times), poses, samples, earth)


def _straight(spec, earth, dt):
    a, K = float(spec.params["a"]), int(spec.params["K"])
    times = dt * np.arange(K + 1)
    acc = np.array([a, 0.0, 0.0])
    return _integrate(ExtendedPose.identity(), times, lambda k, T: (np.zeros(3), acc), earth)


def _static(spec, earth, dt):
    K = int(round(float(spec.params["duration"]) / dt))
    times = dt * np.arange(K + 1)
    return _integrate(ExtendedPose.identity(), times, lambda k, T: (np.zeros(3), np.zeros(3)), earth)


def _waypoints(spec, earth, dt):
    knots = np.asarray(spec.params.get("waypoints", DEFAULT_WAYPOINTS), dtype=float)
    if knots.ndim != 2 or knots.shape[1] != 4 or knots.shape[0] < 2:
        raise ValueError("waypoints must be rows of (time, speed, yaw rate, pitch rate)")
    t = knots[:, 0]
    # shape-preserving interpolation keeps the standstill segments at rest
    speed = PchipInterpolator(t, knots[:, 1])
    dspeed = speed.derivative()
    yaw = PchipInterpolator(t, knots[:, 2])
    pitch = PchipInterpolator(t, knots[:, 3])
    K = int(math.floor((t[-1] - t[0]) / dt + 1e-9))
    times = t[0] + dt * np.arange(K + 1)
    heading = float(spec.params.get("heading", 0.0))
    T0 = ExtendedPose(np.array([[math.cos(heading), -math.sin(heading), 0.0],
                                [math.sin(heading), math.cos(heading), 0.0],
                                [0.0, 0.0, 1.0]]),
                      np.zeros(3), np.zeros(3))
    T0 = ExtendedPose(T0.R, T0.R @ np.array([float(speed(t[0])), 0.0, 0.0]), T0.p)

    u, du, r, q = speed(times), dspeed(times), yaw(times), pitch(times)
    # body velocity (u, 0, 0): d/dt(R u e_x) = R (u' e_x + w x u e_x)
    rates = np.stack([np.zeros_like(r), q, r], axis=1)
    accs = np.stack([du, u * r, -u * q], axis=1)

    def kinematics(k, T):
        return rates[k], accs[k]

    return _integrate(T0, times, kinematics, earth)


def euler_zyx(roll, pitch, yaw) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    Ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    Rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


def read_pose_csv(path):
    """Rows ``(t, x, y, z, roll, pitch, yaw)`` from a CSV file with a header.

    Raises:
        ValueError: on missing columns, non-numeric values, fewer than four
            rows or non-increasing times.
    """
    cols = ("t", "x", "y", "z", "roll", "pitch", "yaw")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in cols):
            raise ValueError(f"malformed pose CSV {path}: expected columns {','.join(cols)}")
        try:
            rows = [[float(r[c]) for c in cols] for r in reader]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"malformed pose CSV {path}: {exc}") from None
    data = np.array(rows)
    if data.shape[0] < 4:
        raise ValueError(f"malformed pose CSV {path}: need at least 4 rows")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ValueError(f"malformed pose CSV {path}: times must increase")
    return data


def _csv(spec, earth, dt):
    data = read_pose_csv(spec.params["path"])
    t = data[:, 0]
    pos = CubicSpline(t, data[:, 1:4])
    vel, acc = pos.derivative(1), pos.derivative(2)
    ang = CubicSpline(t, np.unwrap(data[:, 4:7], axis=0))
    dang = ang.derivative()
    K = int(math.floor((t[-1] - t[0]) / dt + 1e-9))
    times = t[0] + dt * np.arange(K + 1)

    angles, rates, accs = ang(times), dang(times), acc(times)

    def kinematics(k, T):
        roll, pitch, _ = angles[k]
        dr, dp, dy = rates[k]
        # body rate of a ZYX Euler sequence
        w = np.array([dr - math.sin(pitch) * dy,
                      math.cos(roll) * dp + math.sin(roll) * math.cos(pitch) * dy,
                      -math.sin(roll) * dp + math.cos(roll) * math.cos(pitch) * dy])
        # world acceleration seen from the recomputed attitude
        return w, T.R.T @ accs[k]

    T0 = ExtendedPose(euler_zyx(*ang(t[0])), vel(t[0]), pos(t[0]))
    return _integrate(T0, times, kinematics, earth)


def synthesize_imu(spec: TrajectorySpec, earth: EarthModel | None = None, dt: float = 0.01) -> SyntheticRun:
    """Ground truth and noise-free readings for ``spec`` sampled every ``dt``.

    Args:
        spec: trajectory description.
        earth: gravity and Earth rotation; defaults to a flat, non-rotating
            Earth with z up.
        dt: IMU period in seconds.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    earth = EarthModel.flat() if earth is None else earth
    build = {STRAIGHT_ACCEL: _straight, WAYPOINT_SPLINE: _waypoints, CSV_POSES: _csv, STATIC: _static}
    return build[spec.kind](spec, earth, dt)


def reintegrate(run: SyntheticRun, bias=None):
    """Integrate a run's readings from its first pose with the exact model."""
    bias = ImuBias() if bias is None else bias
    T = run.poses[0]
    out = [T]
    for s in run.samples:
        T = integrate_step_rotating(T, s, run.earth, bias)
        out.append(T)
    return out


def path_length(run: SyntheticRun) -> float:
    p = np.array([T.p for T in run.poses])
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())

