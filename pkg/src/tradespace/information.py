"""Fisher information recursion, PCRLB traces and the trajectory cost.

Two routes compute the same quantity: ``pcrlb_history`` walks the grid one
``fim_step`` at a time and is the reference; ``batch_final_traces`` vectorizes
the recursion over many candidate trajectory sets for the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import sample_states
from .scenario import Scenario, ncv_matrices, nominal_path, time_grid
from .sensing import camera_frame, fov_from_resolution, in_fov, jacobian_from_camera

__all__ = [
    "UnobservableError",
    "prior_information",
    "measurement_information",
    "fim_step",
    "pcrlb_trace",
    "PcrlbHistory",
    "pcrlb_history",
    "trajectory_cost",
    "combine_cost",
    "batch_final_traces",
]


class UnobservableError(np.linalg.LinAlgError):
    pass


def prior_information(sigma_pos: float, sigma_vel: float) -> np.ndarray:
    return np.diag([sigma_pos**-2, sigma_pos**-2, sigma_vel**-2, sigma_vel**-2])


def measurement_information(H: np.ndarray, R: np.ndarray) -> np.ndarray:
    H = np.asarray(H, float)
    if H.shape == (2, 2):
        H = np.hstack([H, np.zeros((2, 2))])
    return H.T @ np.linalg.solve(R, H)


def _is_pd(A: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        return False
    return True


def fim_step(J, F, Q, H=None, R=None) -> np.ndarray:
    """Advance the information matrix one step and add gated measurement terms.

    ``H``/``R`` may be single matrices or equal-length lists (one per UAV whose
    gate is open); a 2x2 ``H`` is taken as the position block.
    """
    J = np.asarray(J, float)
    F = np.asarray(F, float)
    Q = np.asarray(Q, float)
    if _is_pd(J):
        J_pred = np.linalg.inv(Q + F @ np.linalg.solve(J, F.T))
    elif not np.any(Q):
        raise UnobservableError("non-invertible prior information with zero process noise")
    elif _is_pd(Q):
        # information-form prediction; valid for singular J
        Qi = np.linalg.inv(Q)
        D11 = F.T @ Qi @ F
        J_pred = Qi - Qi @ F @ np.linalg.solve(J + D11, F.T @ Qi)
    else:
        raise UnobservableError("singular prior information and singular process noise")
    J_new = J_pred
    if H is not None:
        Hs = H if isinstance(H, (list, tuple)) else [H]
        Rs = R if isinstance(R, (list, tuple)) else [R] * len(Hs)
        for h, r in zip(Hs, Rs):
            J_new = J_new + measurement_information(h, r)
    return 0.5 * (J_new + J_new.T)


def pcrlb_trace(J) -> float:
    """Trace of the position block of J^-1; +inf when J is singular."""
    J = np.asarray(J, float)
    if not _is_pd(J):
        return math.inf
    return float(np.trace(np.linalg.inv(J)[:2, :2]))


@dataclass
class PcrlbHistory:
    times: np.ndarray
    trace_mob: np.ndarray
    trace_vessel: np.ndarray
    J_mob: np.ndarray
    J_vessel: np.ndarray


def _geometry(traj_set, mounts, scenario, times):
    states = [sample_states(tr, times, scenario.gravity) for tr in traj_set]
    fovs = [fov_from_resolution(m) for m in mounts]
    return states, fovs


def pcrlb_history(traj_set, scenario: Scenario, mounts, mob_path=None, vessel_path=None,
                  prior: np.ndarray | None = "default") -> PcrlbHistory:
    """PCRLB traces for both targets along the grid using gates on the nominal target paths."""
    if isinstance(prior, str):
        prior = prior_information(scenario.estimation.prior_sigma_pos, scenario.estimation.prior_sigma_vel)
    elif prior is None:
        prior = np.zeros((4, 4))
    times = time_grid(traj_set[0].duration, scenario.grid_dt)
    dt = times[1] - times[0]
    states, fovs = _geometry(traj_set, mounts, scenario, times)
    paths = {"mob": mob_path or nominal_path(scenario.mob), "vessel": vessel_path or nominal_path(scenario.vessel)}
    traces = {}
    finals = {}
    for name, target in (("mob", scenario.mob), ("vessel", scenario.vessel)):
        F, Q = ncv_matrices(dt, target.process_noise_intensity)
        tpos = paths[name](times)
        J = prior.copy()
        out = [pcrlb_trace(J)]
        for k in range(1, len(times)):
            Hs, Rs = [], []
            for s, mount, fov in zip(states, mounts, fovs):
                d = tpos[k] - s.position[k]
                cx, cy, cz = camera_frame(d[0], d[1], s.altitude, s.heading[k], mount.boresight)
                az, el = math.atan2(cy, cx), math.atan2(-cz, cx)
                if in_fov(az, el, cx, fov):
                    Hs.append(jacobian_from_camera(np.asarray(cx), np.asarray(cy), np.asarray(cz),
                                                   s.heading[k], mount.boresight))
                    Rs.append(mount.noise_cov)
            J = fim_step(J, F, Q, Hs or None, Rs or None)
            out.append(pcrlb_trace(J))
        traces[name] = np.array(out)
        finals[name] = J
    return PcrlbHistory(times, traces["mob"], traces["vessel"], finals["mob"], finals["vessel"])


def combine_cost(trace_mob, trace_vessel, t_f, w1: float, w2: float):
    return w1 * trace_mob + (1.0 - w1) * trace_vessel + w2 * t_f


def trajectory_cost(traj_set, scenario: Scenario, mounts, mob_path=None, vessel_path=None,
                    prior="default") -> float:
    """Weighted PCRLB traces plus time penalty; +inf if either target is unobservable."""
    hist = pcrlb_history(traj_set, scenario, mounts, mob_path, vessel_path, prior)
    if scenario.estimation.integrated_pcrlb:
        tm, tv = np.mean(hist.trace_mob[1:]), np.mean(hist.trace_vessel[1:])
    else:
        tm, tv = hist.trace_mob[-1], hist.trace_vessel[-1]
    # w1 = 1 or 0 drops the other term entirely, including an infinite one
    terms = 0.0
    if scenario.w1 > 0:
        terms += scenario.w1 * tm
    if scenario.w1 < 1:
        terms += (1.0 - scenario.w1) * tv
    return float(terms + scenario.w2 * hist.times[-1])


def batch_final_traces(positions, headings, valid_steps, dts, altitudes, boresights, fovs, sigmas,
                       target_xy, q, J0, integrated=False):
    """Vectorized PCRLB recursion over a batch of candidate trajectory sets.

    positions: (C, U, K+1, 2); headings: (C, U, K+1); valid_steps: (C,) number
    of steps per candidate; dts: (C,); altitudes, boresights, sigmas: (U,);
    fovs: list of U ``Fov``; target_xy: (C, K+1, 2). Returns (C,) traces.
    """
    C, U, K1, _ = positions.shape
    F = np.broadcast_to(np.eye(4), (C, 4, 4)).copy()
    F[:, 0, 2] = F[:, 1, 3] = dts
    Qb = np.zeros((C, 4, 4))
    Qb[:, 0, 0] = Qb[:, 1, 1] = dts**3 / 3
    Qb[:, 0, 2] = Qb[:, 2, 0] = Qb[:, 1, 3] = Qb[:, 3, 1] = dts**2 / 2
    Qb[:, 2, 2] = Qb[:, 3, 3] = dts
    Qb *= q
    FT = np.swapaxes(F, 1, 2)

    # measurement information for every (candidate, step), summed over UAVs
    d = target_xy[:, None, :, :] - positions
    h = np.asarray(altitudes, float)[None, :, None]
    b = np.asarray(boresights, float)[None, :, None]
    cx, cy, cz = camera_frame(d[..., 0], d[..., 1], h, headings, b)
    az, el = np.arctan2(cy, cx), np.arctan2(-cz, cx)
    fx = np.array([f.x for f in fovs])[None, :, None]
    fy = np.array([f.y for f in fovs])[None, :, None]
    gate = (cx > 0) & (np.abs(az) <= fx / 2) & (np.abs(el) <= fy / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        Hp = jacobian_from_camera(cx, cy, cz, headings, b)  # (C, U, K+1, 2, 2)
    Hp = np.where(gate[..., None, None], Hp, 0.0)
    w = gate / np.asarray(sigmas, float)[None, :, None] ** 2
    info_pos = np.einsum("cuk,cukji,cukjl->ckil", w, Hp, Hp)

    J = np.broadcast_to(J0, (C, 4, 4)).copy()
    total = np.zeros(C)
    final = np.full(C, np.nan)
    for k in range(1, K1):
        active = k <= valid_steps
        P = np.linalg.inv(J)
        P_pred = F @ P @ FT + Qb
        J_new = np.linalg.inv(P_pred)
        J_new[:, :2, :2] += info_pos[:, k]
        J_new = 0.5 * (J_new + np.swapaxes(J_new, 1, 2))
        J = np.where(active[:, None, None], J_new, J)
        tr = np.trace(np.linalg.inv(J)[:, :2, :2], axis1=1, axis2=2)
        total += np.where(active, tr, 0.0)
        final = np.where(k == valid_steps, tr, final)
    if integrated:
        return total / valid_steps
    return final
