"""Inner-loop trajectory optimization for a fixed team architecture.

Decision vector: for each UAV the free control points P_1..P_n (P_0 is pinned
at the vessel launch point), flattened x/y, followed by the shared mission
duration t_f. The search is a seeded cross-entropy loop: sample around the
incumbent, score by penalized PCRLB cost, refit a diagonal Gaussian on elites.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .information import batch_final_traces, prior_information, trajectory_cost
from .kinematics import (TrajectorySpline, bernstein_basis, derivative_points, flat_outputs,
                         turn_radius)
from .scenario import CONSTRAINT_CLASSES, FeasibilityReport, Scenario, check_constraints, nominal_path
from .sensing import CameraMount, fov_from_resolution

__all__ = [
    "TrajOptProblem",
    "TrajOptResult",
    "penalized_cost",
    "batch_penalized_cost",
    "solve_trajectories",
    "initial_guess",
    "penalty",
]

log = logging.getLogger(__name__)

_MIN_TF_FRACTION = 0.05


def _rho(scenario: Scenario) -> dict[str, float]:
    s = scenario.trajopt
    return {"bank": s.rho_roll, "x_bounds": s.rho_bounds, "y_bounds": s.rho_bounds,
            "nfz": s.rho_nfz, "comm": s.rho_comm, "speed": s.rho_speed}


@dataclass
class TrajOptProblem:
    scenario: Scenario
    mounts: list[CameraMount]
    degree: int | None = None
    rho: dict[str, float] | None = None
    basis: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        if self.degree is None:
            self.degree = self.scenario.trajopt.degree
        if self.degree < 3:
            raise ValueError("spline degree must be >= 3")
        if self.rho is None:
            self.rho = _rho(self.scenario)
        if not self.mounts:
            raise ValueError("need at least one UAV")
        if (self.basis is None) != (self.offset is None):
            raise ValueError("basis and offset go together")

    @property
    def n_uav(self) -> int:
        return len(self.mounts)

    @property
    def full_dim(self) -> int:
        return self.n_uav * 2 * self.degree + 1

    @property
    def dim(self) -> int:
        return self.full_dim if self.basis is None else self.basis.shape[1]

    @property
    def launch(self) -> np.ndarray:
        return np.asarray(self.scenario.vessel.initial_position, float)

    @property
    def t_bounds(self) -> tuple[float, float]:
        t_max = self.scenario.mission_duration_max
        return _MIN_TF_FRACTION * t_max, t_max

    def expand(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, float))
        if self.basis is None:
            if z.shape[1] != self.full_dim:
                raise ValueError(f"decision vector length {z.shape[1]} != {self.full_dim}")
            return z
        return self.offset + z @ self.basis.T

    def decode(self, z):
        """(C, U, n+1, 2) control points and (C,) durations for a batch of vectors."""
        full = self.expand(z)
        C = full.shape[0]
        free = full[:, :-1].reshape(C, self.n_uav, self.degree, 2)
        start = np.broadcast_to(self.launch, (C, self.n_uav, 1, 2))
        t_f = np.clip(full[:, -1], *self.t_bounds)
        return np.concatenate([start, free], axis=2), t_f

    def splines(self, z) -> list[TrajectorySpline]:
        P, t_f = self.decode(z)
        return [TrajectorySpline(P[0, u], float(t_f[0]), self.scenario.altitude(u)) for u in range(self.n_uav)]

    def encode(self, splines) -> np.ndarray:
        parts = [np.asarray(s.control_points[1:], float).ravel() for s in splines]
        return np.concatenate(parts + [[splines[0].duration]])


@dataclass
class TrajOptResult:
    splines: list[TrajectorySpline]
    cost: float
    penalized: float
    report: FeasibilityReport
    iterations: int
    evaluations: int
    converged: bool
    feasible: bool
    vector: np.ndarray
    history: list[float] = field(default_factory=list)


def penalty(report: FeasibilityReport, rho: dict[str, float]) -> float:
    return float(sum(rho[c] * report.violation(c) ** 2 for c in CONSTRAINT_CLASSES))


def penalized_cost(z, problem: TrajOptProblem) -> float:
    """Reference route: trajectory cost plus exterior quadratic penalties."""
    splines = problem.splines(z)
    J = trajectory_cost(splines, problem.scenario, problem.mounts)
    if math.isinf(J):
        return math.inf
    return J + penalty(check_constraints(splines, problem.scenario), problem.rho)


def _batch_samples(problem: TrajOptProblem, P, t_f):
    sc = problem.scenario
    steps = np.maximum(1, np.ceil(t_f / sc.grid_dt - 1e-9).astype(int))
    K = int(steps.max())
    k = np.arange(K + 1)
    tau = np.minimum(k[None, :] / steps[:, None], 1.0)                 # (C, K+1)
    times = tau * t_f[:, None]
    n = problem.degree
    B0 = bernstein_basis(n, tau)
    B1 = bernstein_basis(n - 1, tau)
    B2 = bernstein_basis(n - 2, tau)
    D1 = derivative_points(P, 1) / t_f[:, None, None, None]
    D2 = derivative_points(P, 2) / t_f[:, None, None, None] ** 2
    pos = np.einsum("ckj,cujd->cukd", B0, P)
    vel = np.einsum("ckj,cujd->cukd", B1, D1)
    acc = np.einsum("ckj,cujd->cukd", B2, D2)
    heading, _, roll, speed = flat_outputs(vel, acc, sc.gravity)
    valid = k[None, :] <= steps[:, None]
    return times, steps, valid, pos, heading, roll, speed


def _batch_margins(problem, times, steps, valid, pos, roll, speed):
    sc = problem.scenario
    mob = nominal_path(sc.mob)(times)                                   # (C, K+1, 2)
    vessel_f = nominal_path(sc.vessel)(times[np.arange(len(steps)), steps])  # (C, 2)
    x_min, x_max, y_min, y_max = sc.mission_bounds
    m = valid[:, None, :]
    big = np.inf

    def worst(a):
        return np.min(np.where(m, a, big), axis=2)

    v = sc.uav_speed
    final = pos[np.arange(len(steps)), :, steps]                        # (C, U, 2)
    margins = {
        "bank": sc.bank_limit - np.max(np.where(m, np.abs(roll), -big), axis=2),
        "x_bounds": np.minimum(worst(pos[..., 0] - x_min), worst(x_max - pos[..., 0])),
        "y_bounds": np.minimum(worst(pos[..., 1] - y_min), worst(y_max - pos[..., 1])),
        "nfz": worst(np.linalg.norm(pos - mob[:, None], axis=-1)) - sc.nfz_radius,
        "comm": sc.comm_radius - np.linalg.norm(final - vessel_f[:, None], axis=-1),
        "speed": sc.speed_band * v - np.max(np.where(m, np.abs(speed - v), -big), axis=2),
    }
    return margins  # each (C, U)


def batch_penalized_cost(Z, problem: TrajOptProblem):
    """Vectorized route: returns (penalized, J, total violation) arrays over the batch."""
    sc = problem.scenario
    P, t_f = problem.decode(Z)
    times, steps, valid, pos, heading, roll, speed = _batch_samples(problem, P, t_f)
    dts = t_f / steps
    est = sc.estimation
    J0 = prior_information(est.prior_sigma_pos, est.prior_sigma_vel)
    alts = [sc.altitude(u) for u in range(problem.n_uav)]
    bores = [m.boresight for m in problem.mounts]
    fovs = [fov_from_resolution(m) for m in problem.mounts]
    sigmas = [m.sigma for m in problem.mounts]
    traces = {}
    for name in ("mob", "vessel"):
        target = getattr(sc, name)
        traces[name] = batch_final_traces(pos, heading, steps, dts, alts, bores, fovs, sigmas,
                                          nominal_path(target)(times), target.process_noise_intensity,
                                          J0, est.integrated_pcrlb)
    J = np.zeros(len(t_f))
    if sc.w1 > 0:
        J += sc.w1 * traces["mob"]
    if sc.w1 < 1:
        J += (1 - sc.w1) * traces["vessel"]
    J += sc.w2 * t_f
    margins = _batch_margins(problem, times, steps, valid, pos, roll, speed)
    pen = np.zeros_like(J)
    viol = np.zeros_like(J)
    for c in CONSTRAINT_CLASSES:
        v = np.max(np.maximum(0.0, -margins[c]), axis=1)
        pen += problem.rho[c] * v**2
        viol += v
    return J + pen, J, viol


# --- initial guess ------------------------------------------------------------------


def _filleted_path(points, radius, step=1.0):
    """Polyline with each interior corner replaced by a tangent circular arc.

    The radius shrinks at a corner when the neighbouring legs are too short.
    Returns densely spaced points along the smoothed path.
    """
    points = np.asarray(points, float)
    legs = np.diff(points, axis=0)
    lengths = np.linalg.norm(legs, axis=1)
    keep = lengths > 1e-9
    points = np.vstack([points[:1], points[1:][keep]])
    legs, lengths = legs[keep], lengths[keep]
    dirs = legs / lengths[:, None]
    pieces = []
    cursor = points[0]
    for i in range(1, len(points) - 1):
        a, b = dirs[i - 1], dirs[i]
        turn = math.atan2(a[0] * b[1] - a[1] * b[0], float(a @ b))
        if abs(turn) < 1e-6:
            continue
        tan_len = radius * math.tan(abs(turn) / 2)
        limit = 0.5 * min(lengths[i - 1], lengths[i])
        r = radius if tan_len <= limit else limit / math.tan(abs(turn) / 2)
        tan_len = min(tan_len, limit)
        start = points[i] - tan_len * a
        pieces.append(_segment(cursor, start, step))
        left = np.array([-a[1], a[0]]) * math.copysign(1.0, turn)
        center = start + r * left
        phi0 = math.atan2(*(start - center)[::-1])
        m = max(2, int(math.ceil(r * abs(turn) / step)))
        ang = phi0 + np.linspace(0.0, turn, m)
        pieces.append(center + r * np.column_stack([np.cos(ang), np.sin(ang)]))
        cursor = points[i] + tan_len * b
    pieces.append(_segment(cursor, points[-1], step))
    return np.vstack(pieces)


def _segment(p, q, step):
    m = max(2, int(math.ceil(np.linalg.norm(q - p) / step)) + 1)
    return p + np.linspace(0.0, 1.0, m)[:, None] * (q - p)


def _arc_length(path) -> float:
    return float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))


def _uniform_resample(path, n):
    """``n`` points equally spaced in arc length, with unit tangents."""
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    grid = np.linspace(0.0, s[-1], n)
    pts = np.column_stack([np.interp(grid, s, path[:, i]) for i in range(2)])
    tang = np.gradient(pts, axis=0)
    tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-12)
    return pts, tang


def _fit_constant_speed(pts, tangents, duration, altitude, degree, speed, vel_weight=1.0):
    """Linear least squares on position and velocity (speed times tangent); first point pinned."""
    tau = np.linspace(0.0, 1.0, len(pts))
    B0 = bernstein_basis(degree, tau)
    # velocity w.r.t. time as a linear map of the control points
    n = degree
    D = n * (np.eye(n + 1, k=1) - np.eye(n + 1))[:-1]
    B1 = bernstein_basis(n - 1, tau) @ D / duration
    w = vel_weight * duration / n
    A = np.vstack([B0, w * B1])
    rhs = np.vstack([pts, w * speed * tangents])
    rhs = rhs - A[:, :1] * pts[0]
    free, *_ = np.linalg.lstsq(A[:, 1:], rhs, rcond=None)
    return TrajectorySpline(np.vstack([pts[:1], free]), duration, altitude)


def _loop_waypoints(launch, mob, vessel_end, across, extension, side):
    """Racetrack around the MOB: abeam, out past it, across, back abeam, then home."""
    u = mob - launch
    dist = np.linalg.norm(u)
    u = u / dist if dist > 0 else np.array([1.0, 0.0])
    nrm = side * np.array([-u[1], u[0]])
    a, b = mob + across * nrm, mob - across * nrm
    return np.array([launch, a, a + extension * u, b + extension * u, b, vessel_end])


def _polish(spline: TrajectorySpline, target_pts, sc: Scenario, margin: float = 0.8) -> np.ndarray:
    """Nudge free control points toward the speed band and roll limit, keeping the shape.

    Hinge residuals aim inside ``margin`` of each limit so the search starts
    from a feasible neighbourhood.
    """
    n = spline.degree
    t_f = spline.duration
    P0 = spline.control_points[0]
    tau = np.linspace(0.0, 1.0, max(4 * n, int(math.ceil(t_f / sc.grid_dt))) + 1)
    B0 = bernstein_basis(n, tau)
    B1 = bernstein_basis(n - 1, tau)
    B2 = bernstein_basis(n - 2, tau)
    idx = np.linspace(0, len(target_pts) - 1, len(tau)).round().astype(int)
    target = np.asarray(target_pts)[idx]
    mob = nominal_path(sc.mob)(tau * t_f)
    v = sc.uav_speed
    inset = 0.01 * min(sc.mission_bounds[1] - sc.mission_bounds[0], sc.mission_bounds[3] - sc.mission_bounds[2])
    x_min, x_max, y_min, y_max = np.add(sc.mission_bounds, [inset, -inset, inset, -inset])
    home = nominal_path(sc.vessel)(np.array([t_f]))[0]
    track_w = 0.02
    x = spline.control_points[1:].ravel()

    def residuals(flat):
        P = np.vstack([P0, flat.reshape(n, 2)])
        pos = B0 @ P
        vel = B1 @ derivative_points(P, 1) / t_f
        acc = B2 @ derivative_points(P, 2) / t_f**2
        _, _, roll, speed = flat_outputs(vel, acc, sc.gravity)
        r_speed = np.maximum(0.0, np.abs(speed - v) - margin * sc.speed_band * v)
        r_roll = 20.0 * np.maximum(0.0, np.abs(roll) - margin * sc.bank_limit)
        r_nfz = np.maximum(0.0, sc.nfz_radius / margin - np.linalg.norm(pos - mob, axis=1))
        r_box = np.concatenate([np.maximum(0.0, x_min - pos[:, 0]), np.maximum(0.0, pos[:, 0] - x_max),
                                np.maximum(0.0, y_min - pos[:, 1]), np.maximum(0.0, pos[:, 1] - y_max)])
        r_comm = 10.0 * max(0.0, np.linalg.norm(pos[-1] - home) - margin * sc.comm_radius)
        r_track = track_w * (pos - target).ravel()
        return np.concatenate([r_speed, r_roll, r_nfz, r_box, [r_comm], r_track])

    # relax the pull toward the sketch until the hinge terms are satisfied
    for _ in range(6):
        x = least_squares(residuals, x, method="trf", x_scale="jac", max_nfev=400).x
        if not np.any(residuals(x)[: -2 * len(tau)]):
            break
        track_w *= 0.2
    return x


def _templates(sc: Scenario, margin: float = 0.8):
    """Template racetracks as (lateral clearance, spread per UAV pair).

    Wide passes fan out across the team; the buffer-hugging pass stays as
    close as the polish margin allows so any UAV can look down on the MOB.
    """
    r_turn = turn_radius(sc.uav_speed, sc.bank_limit, sc.gravity)
    return [
        (max(1.5 * sc.nfz_radius, 1.5 * r_turn), 0.6),
        (sc.nfz_radius / margin + 0.1 * r_turn, 0.0),
    ]


@functools.lru_cache(maxsize=32)
def _template_options(sc: Scenario, n_uav: int, degree: int):
    """Polished template loops per UAV and the shared duration; camera independent, so cached."""
    v = sc.uav_speed
    t_max = sc.mission_duration_max
    launch = np.asarray(sc.vessel.initial_position, float)
    mob_at = nominal_path(sc.mob)
    templates = _templates(sc)

    def loop(u, tpl, t_f, extension):
        across, spread = tpl
        scale = 1.0 + spread * (u // 2)
        side = 1.0 if u % 2 == 0 else -1.0
        # the crossing leg sits at least as far past the MOB as the sides are abeam
        across = across * scale
        return _loop_waypoints(launch, mob_at(t_f / 3), nominal_path(sc.vessel)(t_f),
                               across, across + extension, side)

    r_fillet = 1.5 * turn_radius(v, sc.bank_limit, sc.gravity)

    def length(w):
        return _arc_length(_filleted_path(w, r_fillet, step=2.0))

    # the vessel end point moves with t_f, so settle t_f on the longest unstretched loop
    t_f = 0.5 * t_max
    for _ in range(20):
        t_f = min(t_max, max(length(loop(u, tpl, t_f, 0.0))
                             for u in range(n_uav) for tpl in templates) / v)
    x_min, x_max, y_min, y_max = sc.mission_bounds
    options = []
    for u in range(n_uav):
        per_uav = []
        for tpl in templates:
            lo, hi = 0.0, 2.0 * v * t_max
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if length(loop(u, tpl, t_f, mid)) < v * t_f:
                    lo = mid
                else:
                    hi = mid
            w = loop(u, tpl, t_f, lo)
            w[1:-1, 0] = np.clip(w[1:-1, 0], x_min, x_max)
            w[1:-1, 1] = np.clip(w[1:-1, 1], y_min, y_max)
            pts, tang = _uniform_resample(_filleted_path(w, r_fillet), 400)
            spline = _fit_constant_speed(pts, tang, t_f, sc.altitude(u), degree, v)
            per_uav.append(_polish(spline, pts, sc))
        options.append(per_uav)

    return t_f, tuple(tuple(o) for o in options)


def initial_guess(problem: TrajOptProblem) -> np.ndarray:
    """Out-and-back loops toward the MOB and home to the vessel, one per UAV.

    Each UAV gets a few template loops, polished toward feasibility; a greedy
    pass then picks one template per UAV under the penalized cost. The
    duration is set by the longest unstretched template at nominal speed and
    shorter loops are stretched to take the same time.
    """
    t_f, options = _template_options(problem.scenario, problem.n_uav, problem.degree)
    T = len(options[0])
    full_problem = replace(problem, basis=None, offset=None)

    def score(choice_sets):
        Z = np.array([np.concatenate([options[u][c] for u, c in enumerate(ch)] + [[t_f]])
                      for ch in choice_sets])
        return batch_penalized_cost(Z, full_problem)[0]

    uniform = [[j] * problem.n_uav for j in range(T)]
    choice = uniform[int(np.argmin(score(uniform)))]
    for u in range(problem.n_uav):
        trials = [choice[:u] + [j] + choice[u + 1:] for j in range(T)]
        choice = trials[int(np.argmin(score(trials)))]
    full = np.concatenate([options[u][c] for u, c in enumerate(choice)] + [[t_f]])
    if problem.basis is None:
        return full
    z, *_ = np.linalg.lstsq(problem.basis, full - problem.offset, rcond=None)
    return z


def _initial_scale(problem: TrajOptProblem) -> np.ndarray:
    sc = problem.scenario
    x_min, x_max, y_min, y_max = sc.mission_bounds
    pts = 0.04 * max(x_max - x_min, y_max - y_min)
    full = np.full(problem.full_dim, pts)
    full[-1] = 0.05 * sc.mission_duration_max
    if problem.basis is None:
        return full
    return np.abs(problem.basis).T @ full / np.maximum(np.abs(problem.basis).sum(axis=0), 1e-12)


# --- solver ----------------------------------------------------------------------------


def solve_trajectories(problem: TrajOptProblem, seed: int, budget: int | None = None,
                       x0=None, smoothing: float = 0.7, scale=None) -> TrajOptResult:
    """Seeded cross-entropy search with elitism; prefers feasible solutions.

    ``x0`` and ``scale`` override the initial guess and the initial sampling
    std (per decision variable).
    """
    sc = problem.scenario
    budget = sc.trajopt.budget if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    pop = max(2, sc.trajopt.population)
    n_elite = max(2, int(math.ceil(sc.trajopt.elite_fraction * pop)))

    mean = initial_guess(problem) if x0 is None else np.asarray(x0, float)
    std = _initial_scale(problem) if scale is None else np.broadcast_to(np.asarray(scale, float), mean.shape).copy()
    floor = 1e-3 * std

    pen, J, viol = batch_penalized_cost(mean[None], problem)
    best = (pen[0], mean.copy())                       # lowest penalized cost, drives the search
    best_feasible = (J[0], mean.copy()) if viol[0] == 0 else None
    evals = 1
    history = [best[0]]
    iterations = 0
    rel_change = math.inf
    while evals < budget:
        lam = min(pop, budget - evals)
        Z = mean + std * rng.standard_normal((lam, len(mean)))
        pen, J, viol = batch_penalized_cost(Z, problem)
        evals += lam
        iterations += 1
        prev = best[0]
        i = int(np.argmin(pen))
        if pen[i] < best[0]:
            best = (pen[i], Z[i].copy())
        ok = np.flatnonzero(viol == 0)
        if ok.size:
            j = ok[np.argmin(J[ok])]
            if best_feasible is None or J[j] < best_feasible[0]:
                best_feasible = (J[j], Z[j].copy())
        history.append(best[0])
        order = np.argsort(pen, kind="stable")[: min(n_elite, lam)]
        elites = np.vstack([Z[order], best[1][None]])
        mean = smoothing * elites.mean(axis=0) + (1 - smoothing) * mean
        std = np.maximum(smoothing * elites.std(axis=0) + (1 - smoothing) * std, floor)
        rel_change = (prev - best[0]) / max(abs(best[0]), 1e-300)

    z_best = best_feasible[1] if best_feasible is not None else best[1]
    splines = problem.splines(z_best)
    report = check_constraints(splines, sc)
    pen_best, J_best, _ = batch_penalized_cost(z_best[None], problem)
    feasible = report.feasible
    converged = feasible and rel_change < 1e-3
    log.debug("trajopt: %d evals, J=%.4g, penalized=%.4g, feasible=%s", evals, J_best[0], pen_best[0], feasible)
    return TrajOptResult(splines, float(J_best[0]), float(pen_best[0]), report, iterations, evals,
                         converged, feasible, problem.expand(z_best)[0], history)
