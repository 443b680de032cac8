"""Bank-to-turn UAV kinematics over Bernstein-polynomial position curves.

Trajectories are flat outputs: a planar Bernstein curve per UAV at constant
altitude. Heading, curvature and the coordinated-turn roll angle are recovered
from its first two derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

__all__ = [
    "SPEED_EPSILON",
    "UavState",
    "TrajectorySpline",
    "SampledStates",
    "bernstein_basis",
    "derivative_points",
    "bernstein_eval",
    "derive_flat_outputs",
    "flat_outputs",
    "sample_states",
    "feasibility_margins",
    "elevate_degree",
    "turn_radius",
    "fit_spline",
]

SPEED_EPSILON = 1e-6


@dataclass(frozen=True)
class UavState:
    x: float
    y: float
    altitude: float
    heading: float
    roll: float
    speed: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class TrajectorySpline:
    control_points: np.ndarray
    duration: float
    altitude: float

    def __post_init__(self):
        P = np.array(self.control_points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValueError("control points must have shape (n+1, 2)")
        if P.shape[0] < 4:
            raise ValueError("spline degree must be >= 3")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        P.setflags(write=False)
        object.__setattr__(self, "control_points", P)

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1


def bernstein_basis(n: int, tau) -> np.ndarray:
    """Degree-``n`` Bernstein basis at ``tau``; trailing axis has length n + 1."""
    tau = np.asarray(tau, dtype=float)[..., None]
    i = np.arange(n + 1)
    return comb(n, i) * tau**i * (1.0 - tau) ** (n - i)


def derivative_points(P: np.ndarray, order: int) -> np.ndarray:
    """Control points of the ``order``-th derivative curve w.r.t. normalized time.

    Operates on the second-to-last axis so batches of control polygons work.
    """
    n = P.shape[-2] - 1
    out = np.asarray(P, float)
    for r in range(order):
        out = (n - r) * np.diff(out, axis=-2)
    return out


def bernstein_eval(traj: TrajectorySpline, t, order: int = 0) -> np.ndarray:
    """Position (order 0), velocity (1) or acceleration (2) at time ``t`` in seconds."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    t_arr = np.asarray(t, dtype=float)
    tol = 1e-9 * traj.duration
    if np.any(t_arr < -tol) or np.any(t_arr > traj.duration + tol):
        raise ValueError(f"t outside [0, {traj.duration}]")
    tau = np.clip(t_arr / traj.duration, 0.0, 1.0)
    D = derivative_points(traj.control_points, order)
    return bernstein_basis(D.shape[0] - 1, tau) @ D / traj.duration**order


def flat_outputs(vel: np.ndarray, acc: np.ndarray, gravity: float):
    """Heading, curvature, roll and speed from planar velocity/acceleration arrays.

    Samples whose speed is below ``SPEED_EPSILON`` get zero curvature and hold
    the previous heading along the last-but-one axis.
    """
    vx, vy = vel[..., 0], vel[..., 1]
    speed = np.hypot(vx, vy)
    ok = speed > SPEED_EPSILON
    safe = np.where(ok, speed, 1.0)
    kappa = np.where(ok, (vx * acc[..., 1] - vy * acc[..., 0]) / safe**3, 0.0)
    roll = np.arctan(kappa * speed**2 / gravity)
    heading = np.arctan2(vy, vx)
    if not np.all(ok):
        heading = heading.copy()
        bad = ~ok
        # forward fill along the sample axis; leading degenerate samples keep 0
        idx = np.where(ok, np.arange(heading.shape[-1]), 0)
        np.maximum.accumulate(idx, axis=-1, out=idx)
        filled = np.take_along_axis(heading, idx, axis=-1)
        heading = np.where(bad, filled, heading)
        heading = np.where(bad & ~np.maximum.accumulate(ok, axis=-1), 0.0, heading)
    return heading, kappa, roll, speed


def derive_flat_outputs(traj: TrajectorySpline, t: float, gravity: float = 9.81) -> tuple[UavState, float]:
    vel = bernstein_eval(traj, t, 1)
    if np.hypot(*vel) <= SPEED_EPSILON:
        raise ValueError("speed below epsilon; heading undefined")
    pos = bernstein_eval(traj, t, 0)
    acc = bernstein_eval(traj, t, 2)
    heading, kappa, roll, speed = flat_outputs(vel, acc, gravity)
    state = UavState(float(pos[0]), float(pos[1]), traj.altitude, float(heading), float(roll), float(speed))
    return state, float(kappa)


@dataclass
class SampledStates:
    times: np.ndarray
    position: np.ndarray
    heading: np.ndarray
    roll: np.ndarray
    speed: np.ndarray
    curvature: np.ndarray
    altitude: float

    def state(self, k: int) -> UavState:
        return UavState(*self.position[k], self.altitude, self.heading[k], self.roll[k], self.speed[k])


def sample_states(traj: TrajectorySpline, times, gravity: float = 9.81) -> SampledStates:
    times = np.asarray(times, float)
    pos = bernstein_eval(traj, times, 0)
    vel = bernstein_eval(traj, times, 1)
    acc = bernstein_eval(traj, times, 2)
    heading, kappa, roll, speed = flat_outputs(vel, acc, gravity)
    return SampledStates(times, pos, heading, roll, speed, kappa, traj.altitude)


def feasibility_margins(traj: TrajectorySpline, scenario) -> dict[str, float]:
    """Worst-case roll and speed-band margins on the scenario grid (negative = violated)."""
    from .scenario import time_grid

    s = sample_states(traj, time_grid(traj.duration, scenario.grid_dt), scenario.gravity)
    v = scenario.uav_speed
    return {
        "roll": float(scenario.bank_limit - np.max(np.abs(s.roll))),
        "speed": float(scenario.speed_band * v - np.max(np.abs(s.speed - v))),
    }


def elevate_degree(traj: TrajectorySpline) -> TrajectorySpline:
    """Same curve expressed with one more control point."""
    P = traj.control_points
    n = P.shape[0] - 1
    i = np.arange(1, n + 1)[:, None] / (n + 1)
    inner = i * P[:-1] + (1 - i) * P[1:]
    Q = np.vstack([P[:1], inner, P[-1:]])
    return TrajectorySpline(Q, traj.duration, traj.altitude)


def turn_radius(speed: float, roll: float, gravity: float = 9.81) -> float:
    """Coordinated-turn radius v^2 / (g tan(phi))."""
    return speed**2 / (gravity * math.tan(roll))


def fit_spline(points: np.ndarray, duration: float, altitude: float, degree: int,
               fix_start: bool = True) -> TrajectorySpline:
    """Least-squares Bernstein fit to points sampled uniformly in time over the curve.

    With ``fix_start`` the first control point is pinned to ``points[0]``.
    """
    points = np.asarray(points, float)
    tau = np.linspace(0.0, 1.0, len(points))
    B = bernstein_basis(degree, tau)
    if fix_start:
        rhs = points - B[:, :1] * points[0]
        free, *_ = np.linalg.lstsq(B[:, 1:], rhs, rcond=None)
        P = np.vstack([points[:1], free])
    else:
        P, *_ = np.linalg.lstsq(B, points, rcond=None)
    return TrajectorySpline(P, duration, altitude)
