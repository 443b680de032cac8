"""Per-UAV bearing-only EKFs, end-of-mission federated fusion and Monte Carlo RMSE.

Every UAV runs one EKF per target on a 4D nearly-constant-velocity state.
Filters never talk during flight; their beliefs are fused by summing
information at the final time. Trials are vectorized, but each trial draws
its noise from its own generator seeded with ``base_seed + i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .information import prior_information
from .kinematics import UavState, sample_states
from .scenario import Scenario, TargetModel, ncv_matrices, ncv_noise_factor, time_grid
from .sensing import (
    BearingMeasurement,
    CameraMount,
    camera_frame,
    fov_from_resolution,
    jacobian_from_camera,
)

__all__ = [
    "Belief",
    "MonteCarloResult",
    "TrialOutcome",
    "wrap_angle",
    "kalman_update",
    "ekf_predict",
    "ekf_update",
    "fkf_fuse",
    "simulate_trials",
    "run_trial",
    "monte_carlo_rmse",
]

TARGETS = ("mob", "vessel")
ITERATIONS = 8


@dataclass(frozen=True, eq=False)
class Belief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, float)
        cov = np.array(self.cov, float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, float), 2 * np.pi)


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def kalman_update(mean, cov, z, z_pred, H, R, wrap=True):
    """Kalman update with Joseph-form covariance; works on stacked leading axes."""
    mean = np.asarray(mean, float)
    cov = np.asarray(cov, float)
    H = np.asarray(H, float)
    nu = np.asarray(z, float) - np.asarray(z_pred, float)
    if wrap:
        nu = wrap_angle(nu)
    HT = np.swapaxes(H, -1, -2)
    PHT = cov @ HT
    S = H @ PHT + R
    K = np.swapaxes(np.linalg.solve(S, np.swapaxes(PHT, -1, -2)), -1, -2)
    new_mean = mean + (K @ nu[..., None])[..., 0]
    A = np.eye(cov.shape[-1]) - K @ H
    new_cov = A @ cov @ np.swapaxes(A, -1, -2) + K @ R @ np.swapaxes(K, -1, -2)
    return new_mean, _sym(new_cov)


def ekf_predict(b: Belief, F, Q) -> Belief:
    F = np.asarray(F, float)
    return Belief(F @ b.mean, F @ b.cov @ F.T + np.asarray(Q, float))


def _bearing_model(est_xy, uav_xy, h, heading, boresight):
    d = est_xy - uav_xy
    ex, ey, ez = camera_frame(d[..., 0], d[..., 1], h, heading, boresight)
    z_pred = np.stack([np.arctan2(ey, ex), np.arctan2(-ez, ex)], axis=-1)
    Hp = jacobian_from_camera(ex, ey, ez, heading, boresight)
    return z_pred, np.concatenate([Hp, np.zeros(Hp.shape)], axis=-1)


def _map_objective(x, mean, info, z, R_inv, uav_xy, h, heading, boresight):
    z_pred, _ = _bearing_model(x[..., :2], uav_xy, h, heading, boresight)
    nu = wrap_angle(z - z_pred)
    dx = x - mean
    prior = (dx[..., None, :] @ info @ dx[..., :, None])[..., 0, 0]
    meas = (nu[..., None, :] @ R_inv @ nu[..., :, None])[..., 0, 0]
    return prior + meas


def _ground_point(z, uav_xy, h, heading, boresight):
    """Where the measured ray meets the sea surface; ``ok`` is False for rays at or above the horizon."""
    tan_az, tan_el = np.tan(z[..., 0]), np.tan(z[..., 1])
    cb, sb = np.cos(boresight), np.sin(boresight)
    # camera ray (1, tan az, -tan el) rotated back to body forward/down
    fwd = cb + sb * tan_el
    down = sb - cb * tan_el
    ok = (down > 1e-9) & (np.abs(z[..., 0]) < np.pi / 2)
    scale = np.where(ok, h / np.where(ok, down, 1.0), 0.0)
    f, r = fwd * scale, tan_az * scale
    c, s = np.cos(heading), np.sin(heading)
    d = np.stack([c * f - s * r, s * f + c * r], axis=-1)
    return uav_xy + d, ok


def iterated_bearing_update(mean, cov, z, R, uav_xy, h, heading, boresight, iterations=ITERATIONS):
    """Iterated EKF update for bearing measurements.

    Gauss-Newton on the MAP objective, started from the prior mean or, if it
    scores better, from the point where the measured ray meets the sea surface.
    Steps that fail to decrease the objective are halved. Covariance uses the
    Joseph form with the gain of the final linearization.
    """
    try:
        info = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        # a collapsed covariance (noise-free runs) still defines the objective on its range
        info = np.linalg.pinv(cov, hermitian=True)
    R_inv = np.linalg.inv(R)
    x = mean
    f = _map_objective(x, mean, info, z, R_inv, uav_xy, h, heading, boresight)
    # start from the ray/sea-surface intersection when it explains the data better
    ground, ok = _ground_point(z, uav_xy, h, heading, boresight)
    shift = ground - mean[..., :2]
    gain = np.linalg.solve(cov[..., :2, :2], cov[..., :2, 2:])          # P_pp^-1 P_pv
    vel = mean[..., 2:] + (np.swapaxes(gain, -1, -2) @ shift[..., None])[..., 0]
    alt = np.concatenate([ground, vel], axis=-1)
    f_alt = _map_objective(alt, mean, info, z, R_inv, uav_xy, h, heading, boresight)
    use = ok & (f_alt < f)
    x = np.where(use[..., None], alt, x)
    f = np.where(use, f_alt, f)
    for _ in range(iterations):
        z_pred, H = _bearing_model(x[..., :2], uav_xy, h, heading, boresight)
        # linearization at x, referred back to the prior mean
        z_lin = z_pred + (H @ (mean - x)[..., None])[..., 0]
        x_gn, _ = kalman_update(mean, cov, z, z_lin, H, R)
        step = x_gn - x
        accepted = np.zeros(f.shape, bool)
        for _ in range(6):
            trial = x + step
            f_trial = _map_objective(trial, mean, info, z, R_inv, uav_xy, h, heading, boresight)
            take = ~accepted & (f_trial <= f)
            x = np.where(take[..., None], trial, x)
            f = np.where(take, f_trial, f)
            accepted |= take
            if np.all(accepted):
                break
            step = 0.5 * step
    z_pred, H = _bearing_model(x[..., :2], uav_xy, h, heading, boresight)
    _, new_cov = kalman_update(mean, cov, z, z_pred + (H @ (mean - x)[..., None])[..., 0], H, R)
    return x, new_cov


def ekf_update(b: Belief, meas: BearingMeasurement, uav: UavState, mount: CameraMount,
               iterations: int = ITERATIONS) -> Belief:
    if not meas.valid:
        raise ValueError("measurement outside the FOV gate")
    R = np.diag(np.square(meas.noise_std))
    try:
        mean, cov = iterated_bearing_update(b.mean, b.cov, meas.z, R, np.array([uav.x, uav.y]), uav.altitude,
                                            uav.heading, mount.boresight, iterations)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    return Belief(mean, cov)


def _fuse_arrays(means, covs):
    """Information-sum fusion over axis 0."""
    infos = np.linalg.inv(covs)
    Y = infos.sum(axis=0)
    y = (infos @ means[..., None]).sum(axis=0)
    P = np.linalg.inv(Y)
    return (P @ y)[..., 0], _sym(P)


def fkf_fuse(beliefs) -> Belief:
    beliefs = list(beliefs)
    if not beliefs:
        raise ValueError("nothing to fuse")
    if len(beliefs) == 1:
        return Belief(beliefs[0].mean.copy(), beliefs[0].cov.copy())
    dims = {b.mean.size for b in beliefs}
    if len(dims) != 1:
        raise ValueError("beliefs differ in state dimension")
    means = np.stack([b.mean for b in beliefs])
    covs = np.stack([b.cov for b in beliefs])
    try:
        np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular covariance in fusion") from exc
    mean, cov = _fuse_arrays(means, covs)
    return Belief(mean, cov)


# --- Monte Carlo simulation ------------------------------------------------------------


@dataclass
class TrialOutcome:
    """Stacked results over trials for both targets."""

    fused_mean: dict[str, np.ndarray]   # (M, 4)
    fused_cov: dict[str, np.ndarray]    # (M, 4, 4)
    truth: dict[str, np.ndarray]        # (M, 4) final true states
    sq_err_avg: dict[str, np.ndarray]   # (M,) time-averaged squared position error
    measurement_counts: dict[str, np.ndarray]  # (U,) mean gated measurements per UAV


@dataclass
class MonteCarloResult:
    rmse_mob: float
    rmse_vessel: float
    errors_mob: np.ndarray
    errors_vessel: np.ndarray
    trials: int
    seed: int


def _draws(seed: int, K: int, U: int):
    rng = np.random.default_rng(seed)
    out = {}
    for name in TARGETS:
        out[name] = (rng.standard_normal(4), rng.standard_normal((K, 4)), rng.standard_normal((K, U, 2)))
    return out


def simulate_trials(traj_set, scenario: Scenario, mounts, seeds, noise_scale: float = 1.0) -> TrialOutcome:
    """Run the filters for every seed at once. ``noise_scale`` multiplies measurement noise std."""
    U = len(traj_set)
    times = time_grid(traj_set[0].duration, scenario.grid_dt)
    K = len(times) - 1
    dt = times[1] - times[0]
    seeds = list(seeds)
    M = len(seeds)
    draws = [_draws(s, K, U) for s in seeds]

    states = [sample_states(tr, times, scenario.gravity) for tr in traj_set]
    upos = np.stack([s.position for s in states])          # (U, K+1, 2)
    uhead = np.stack([s.heading for s in states])           # (U, K+1)
    alt = np.array([s.altitude for s in states])[:, None]   # (U, 1)
    bore = np.array([m.boresight for m in mounts])[:, None]
    fovs = [fov_from_resolution(m) for m in mounts]
    half_x = np.array([f.x for f in fovs])[:, None] / 2
    half_y = np.array([f.y for f in fovs])[:, None] / 2
    sig = np.array([m.sigma for m in mounts]) * noise_scale  # (U,)
    R = np.zeros((U, 1, 2, 2))
    R[:, 0, 0, 0] = R[:, 0, 1, 1] = sig**2

    est = scenario.estimation
    P0 = np.linalg.inv(prior_information(est.prior_sigma_pos, est.prior_sigma_vel))
    P0_sqrt = np.sqrt(np.diag(P0))

    out = TrialOutcome({}, {}, {}, {}, {})
    for name in TARGETS:
        target: TargetModel = getattr(scenario, name)
        F, Q = ncv_matrices(dt, target.process_noise_intensity)
        L = ncv_noise_factor(dt, target.process_noise_intensity)
        prior_z = np.stack([d[name][0] for d in draws])     # (M, 4)
        proc_z = np.stack([d[name][1] for d in draws])      # (M, K, 4)
        meas_z = np.stack([d[name][2] for d in draws])      # (M, K, U, 2)

        x = np.broadcast_to(target.initial_state, (M, 4)).copy()
        mean0 = x + prior_z * P0_sqrt
        mean = np.broadcast_to(mean0, (U, M, 4)).copy()
        cov = np.broadcast_to(P0, (U, M, 4, 4)).copy()
        sq_err_sum = np.zeros(M)
        counts = np.zeros(U)
        for k in range(1, K + 1):
            x = x @ F.T + proc_z[:, k - 1] @ L.T
            mean = mean @ F.T
            cov = _sym(F @ cov @ F.T + Q)

            pos_u = upos[:, k][:, None, :]                  # (U, 1, 2)
            head = uhead[:, k][:, None]                     # (U, 1)
            d_true = x[None, :, :2] - pos_u
            cx, cy, cz = camera_frame(d_true[..., 0], d_true[..., 1], alt, head, bore)
            az, el = np.arctan2(cy, cx), np.arctan2(-cz, cx)
            gate = (cx > 0) & (np.abs(az) <= half_x) & (np.abs(el) <= half_y)   # (U, M)
            counts += gate.sum(axis=1)
            if np.any(gate):
                noise = np.transpose(meas_z[:, k - 1], (1, 0, 2)) * sig[:, None, None]
                z = np.stack([az, el], axis=-1) + noise
                # ungated entries are computed and discarded; silence their degenerate geometry
                with np.errstate(invalid="ignore", divide="ignore"):
                    new_mean, new_cov = iterated_bearing_update(mean, cov, z, R, pos_u, alt, head, bore)
                mean = np.where(gate[..., None], new_mean, mean)
                cov = np.where(gate[..., None, None], new_cov, cov)
            if est.rmse_mode == "time_averaged":
                fm, _ = _fuse_arrays(mean, cov) if U > 1 else (mean[0], None)
                sq_err_sum += np.sum((fm[:, :2] - x[:, :2]) ** 2, axis=1)

        if U > 1:
            fmean, fcov = _fuse_arrays(mean, cov)
        else:
            fmean, fcov = mean[0], cov[0]
        out.fused_mean[name] = fmean
        out.fused_cov[name] = fcov
        out.truth[name] = x
        out.sq_err_avg[name] = sq_err_sum / K
        out.measurement_counts[name] = counts / M
    return out


def run_trial(traj_set, scenario: Scenario, mounts, seed: int):
    """One seeded trial: fused final belief and true final state per target."""
    res = simulate_trials(traj_set, scenario, mounts, [seed])
    beliefs = {n: Belief(res.fused_mean[n][0], res.fused_cov[n][0]) for n in TARGETS}
    truth = {n: res.truth[n][0].copy() for n in TARGETS}
    return beliefs, truth


def monte_carlo_rmse(traj_set, scenario: Scenario, mounts, base_seed: int | None = None,
                     trials: int | None = None, noise_scale: float = 1.0) -> MonteCarloResult:
    """Monte Carlo RMSE of the fused horizontal position estimate for both targets."""
    base_seed = scenario.rng_seed if base_seed is None else base_seed
    M = scenario.monte_carlo_trials if trials is None else trials
    if M < 1:
        raise ValueError("need at least one trial")
    res = simulate_trials(traj_set, scenario, mounts, [base_seed + i for i in range(M)], noise_scale)
    errors = {n: res.fused_mean[n][:, :2] - res.truth[n][:, :2] for n in TARGETS}
    if scenario.estimation.rmse_mode == "final":
        rmse = {n: math.sqrt(float(np.mean(np.sum(errors[n] ** 2, axis=1)))) for n in TARGETS}
    else:
        rmse = {n: math.sqrt(float(np.mean(res.sq_err_avg[n]))) for n in TARGETS}
    return MonteCarloResult(rmse["mob"], rmse["vessel"], errors["mob"], errors["vessel"], M, base_seed)
