"""Mission world: geometry, targets, constraint radii, weights and run settings.

Scenarios are stored as INI-style text with sections ``[mission]``, ``[uav]``,
``[targets.mob]``, ``[targets.vessel]``, ``[cost]`` and ``[montecarlo]``, plus
optional tuning sections ``[sensor]``, ``[estimation]`` and ``[trajopt]``.
Angles are degrees on disk and radians in memory.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_SCENARIO",
    "ScenarioError",
    "TargetModel",
    "SensorSettings",
    "EstimationSettings",
    "TrajOptSettings",
    "Scenario",
    "FeasibilityReport",
    "CONSTRAINT_CLASSES",
    "load_scenario",
    "save_scenario",
    "ncv_matrices",
    "propagate_target",
    "nominal_path",
    "time_grid",
    "check_constraints",
    "check_sampled",
]

DEFAULT_SCENARIO = resources.files("tradespace") / "data" / "default_scenario.ini"


class ScenarioError(ValueError):
    """Raised for malformed scenario files or violated scenario invariants."""


@dataclass(frozen=True)
class TargetModel:
    kind: str
    initial_position: tuple[float, float]
    initial_velocity: tuple[float, float]
    process_noise_intensity: float

    def __post_init__(self):
        if self.kind not in ("mob", "vessel"):
            raise ScenarioError(f"unknown target kind {self.kind!r}")
        if not self.process_noise_intensity >= 0:
            raise ScenarioError(f"{self.kind}: process_noise_intensity must be >= 0")

    @property
    def initial_state(self) -> np.ndarray:
        return np.array([*self.initial_position, *self.initial_velocity], dtype=float)


@dataclass(frozen=True)
class SensorSettings:
    ifov_mrad_per_px: float = 0.5
    noise_pixels: float = 1.0


@dataclass(frozen=True)
class EstimationSettings:
    prior_sigma_pos: float = 100.0
    prior_sigma_vel: float = 1.0
    integrated_pcrlb: bool = False
    rmse_mode: str = "final"


@dataclass(frozen=True)
class TrajOptSettings:
    degree: int = 8
    budget: int = 240
    population: int = 24
    elite_fraction: float = 0.25
    rho_bounds: float = 1e3
    rho_nfz: float = 1e3
    rho_comm: float = 1e3
    rho_roll: float = 1e2
    rho_speed: float = 1e2
    mode: str = "nested"


@dataclass(frozen=True)
class Scenario:
    mission_bounds: tuple[float, float, float, float]
    altitude_set: tuple[float, ...]
    uav_speed: float
    bank_limit: float
    nfz_radius: float
    comm_radius: float
    mission_duration_max: float
    w1: float
    w2: float
    monte_carlo_trials: int
    rng_seed: int
    mob: TargetModel
    vessel: TargetModel
    platform_cost: float = 500.0
    support_cost: float = 0.0
    k_res: float = 12.698
    grid_dt: float = 1.0
    gravity: float = 9.81
    speed_band: float = 0.10
    sensor: SensorSettings = field(default_factory=SensorSettings)
    estimation: EstimationSettings = field(default_factory=EstimationSettings)
    trajopt: TrajOptSettings = field(default_factory=TrajOptSettings)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        x_min, x_max, y_min, y_max = self.mission_bounds
        if not (x_min < x_max and y_min < y_max):
            raise ScenarioError("degenerate mission bounds")
        if len(self.altitude_set) == 0 or min(self.altitude_set) <= 0:
            raise ScenarioError("altitudes must be > 0")
        if not self.uav_speed > 0:
            raise ScenarioError("uav_speed must be > 0")
        if not 0 < self.bank_limit < math.pi / 2:
            raise ScenarioError("bank_limit must lie in (0, 90) degrees")
        if self.nfz_radius < 0:
            raise ScenarioError("nfz_radius must be >= 0")
        if not self.comm_radius > 0:
            raise ScenarioError("comm_radius must be > 0")
        if not self.mission_duration_max > 0:
            raise ScenarioError("mission_duration_max must be > 0")
        if not 0 <= self.w1 <= 1:
            raise ScenarioError("w1 must lie in [0, 1]")
        if self.w2 < 0:
            raise ScenarioError("w2 must be >= 0")
        if self.monte_carlo_trials < 1:
            raise ScenarioError("monte_carlo_trials must be >= 1")
        if min(self.platform_cost, self.support_cost, self.k_res) < 0:
            raise ScenarioError("costs must be >= 0")
        if not self.grid_dt > 0:
            raise ScenarioError("grid_dt must be > 0")
        if self.estimation.rmse_mode not in ("final", "time_averaged"):
            raise ScenarioError("rmse_mode must be 'final' or 'time_averaged'")
        if self.trajopt.mode not in ("nested", "flatten_into_ga"):
            raise ScenarioError("trajopt mode must be 'nested' or 'flatten_into_ga'")
        if self.trajopt.degree < 3:
            raise ScenarioError("spline degree must be >= 3")

    def altitude(self, uav_index: int) -> float:
        """Altitude for UAV ``uav_index``; the last entry repeats for larger teams."""
        return self.altitude_set[min(uav_index, len(self.altitude_set) - 1)]

    def with_updates(self, **changes) -> "Scenario":
        return replace(self, **changes)


# --- file I/O -------------------------------------------------------------

_MISSION_KEYS = ("x_min", "x_max", "y_min", "y_max")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _get(section, key, conv, default=None):
    if key in section:
        try:
            return conv(section[key])
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key!r}: {section[key]!r}") from exc
    if default is None:
        raise ScenarioError(f"missing required key {key!r} in [{section.name}]")
    return default


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


_DEFAULT_TARGETS = {
    "mob": dict(initial_velocity=(0.5, 0.0), process_noise_intensity=1e-5),
    "vessel": dict(initial_velocity=(3.0, 0.0), process_noise_intensity=1e-3),
}


def _parse_target(cfg, kind: str) -> TargetModel:
    name = f"targets.{kind}"
    if name not in cfg:
        raise ScenarioError(f"missing section [{name}]")
    sec = cfg[name]
    pos = _get(sec, "initial_position", _floats)
    vel = _get(sec, "initial_velocity", _floats, _DEFAULT_TARGETS[kind]["initial_velocity"])
    if len(pos) != 2 or len(vel) != 2:
        raise ScenarioError(f"[{name}] positions and velocities are 2D")
    q = _get(sec, "process_noise_intensity", float, _DEFAULT_TARGETS[kind]["process_noise_intensity"])
    return TargetModel(kind, tuple(pos), tuple(vel), q)


def _parse_settings(cfg, name, cls, converters):
    if name not in cfg:
        return cls()
    sec = cfg[name]
    defaults = cls()
    kwargs = {}
    for f in fields(cls):
        conv = converters.get(f.name, type(getattr(defaults, f.name)))
        kwargs[f.name] = _get(sec, f.name, conv, getattr(defaults, f.name))
    return cls(**kwargs)


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file; unspecified optional keys take their defaults."""
    cfg = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cfg.read_file(fh)
    except configparser.Error as exc:
        raise ScenarioError(f"cannot parse scenario {path}: {exc}") from exc
    for name in ("mission", "uav"):
        if name not in cfg:
            raise ScenarioError(f"missing section [{name}]")
    mission, uav = cfg["mission"], cfg["uav"]
    cost = cfg["cost"] if "cost" in cfg else {}
    mc = cfg["montecarlo"] if "montecarlo" in cfg else {}

    def opt(sec, key, conv, default):
        return _get(sec, key, conv, default) if key in sec else default

    return Scenario(
        mission_bounds=tuple(_get(mission, k, float) for k in _MISSION_KEYS),
        altitude_set=_get(uav, "altitude_set", _floats),
        uav_speed=_get(uav, "uav_speed", float),
        bank_limit=math.radians(_get(uav, "bank_limit", float)),
        nfz_radius=opt(mission, "nfz_radius", float, 0.0),
        comm_radius=_get(mission, "comm_radius", float),
        mission_duration_max=_get(mission, "mission_duration_max", float),
        w1=opt(mission, "w1", float, 0.5),
        w2=opt(mission, "w2", float, 0.0),
        monte_carlo_trials=opt(mc, "monte_carlo_trials", int, 100),
        rng_seed=opt(mc, "rng_seed", int, 0),
        mob=_parse_target(cfg, "mob"),
        vessel=_parse_target(cfg, "vessel"),
        platform_cost=opt(cost, "platform_cost", float, 500.0),
        support_cost=opt(cost, "support_cost", float, 0.0),
        k_res=opt(cost, "k_res", float, 12.698),
        grid_dt=opt(mission, "grid_dt", float, 1.0),
        gravity=opt(uav, "gravity", float, 9.81),
        speed_band=opt(uav, "speed_band", float, 0.10),
        sensor=_parse_settings(cfg, "sensor", SensorSettings, {}),
        estimation=_parse_settings(cfg, "estimation", EstimationSettings, {"integrated_pcrlb": _bool}),
        trajopt=_parse_settings(cfg, "trajopt", TrajOptSettings, {}),
    )


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    cfg = configparser.ConfigParser()
    x_min, x_max, y_min, y_max = scenario.mission_bounds
    cfg["mission"] = {
        "x_min": _fmt(x_min), "x_max": _fmt(x_max), "y_min": _fmt(y_min), "y_max": _fmt(y_max),
        "nfz_radius": _fmt(scenario.nfz_radius),
        "comm_radius": _fmt(scenario.comm_radius),
        "mission_duration_max": _fmt(scenario.mission_duration_max),
        "w1": _fmt(scenario.w1), "w2": _fmt(scenario.w2),
        "grid_dt": _fmt(scenario.grid_dt),
    }
    cfg["uav"] = {
        "altitude_set": _fmt(tuple(scenario.altitude_set)),
        "uav_speed": _fmt(scenario.uav_speed),
        "bank_limit": _fmt(math.degrees(scenario.bank_limit)),
        "gravity": _fmt(scenario.gravity),
        "speed_band": _fmt(scenario.speed_band),
    }
    for t in (scenario.mob, scenario.vessel):
        cfg[f"targets.{t.kind}"] = {
            "initial_position": _fmt(tuple(t.initial_position)),
            "initial_velocity": _fmt(tuple(t.initial_velocity)),
            "process_noise_intensity": _fmt(t.process_noise_intensity),
        }
    cfg["cost"] = {
        "platform_cost": _fmt(scenario.platform_cost),
        "support_cost": _fmt(scenario.support_cost),
        "k_res": _fmt(scenario.k_res),
    }
    cfg["montecarlo"] = {
        "monte_carlo_trials": _fmt(scenario.monte_carlo_trials),
        "rng_seed": _fmt(scenario.rng_seed),
    }
    for name in ("sensor", "estimation", "trajopt"):
        block = getattr(scenario, name)
        cfg[name] = {f.name: _fmt(getattr(block, f.name)) for f in fields(block)}
    with open(path, "w", encoding="utf-8") as fh:
        cfg.write(fh)


# --- target dynamics -------------------------------------------------------


def ncv_matrices(dt: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition and process-noise covariance of the 2D nearly-constant-velocity model.

    State ordering is (x, y, vx, vy).
    """
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    Q = np.zeros((4, 4))
    Q[0, 0] = Q[1, 1] = dt**3 / 3
    Q[0, 2] = Q[2, 0] = Q[1, 3] = Q[3, 1] = dt**2 / 2
    Q[2, 2] = Q[3, 3] = dt
    return F, q * Q


def ncv_noise_factor(dt: float, q: float) -> np.ndarray:
    """Lower Cholesky factor of the NCV process-noise covariance (closed form, valid for q = 0)."""
    s = math.sqrt(q)
    L = np.zeros((4, 4))
    L[0, 0] = L[1, 1] = s * math.sqrt(dt**3 / 3)
    L[2, 0] = L[3, 1] = s * (dt**2 / 2) / math.sqrt(dt**3 / 3)
    L[2, 2] = L[3, 3] = s * math.sqrt(dt) / 2
    return L


def propagate_target(target: TargetModel, state, dt: float, noise_draw=None) -> np.ndarray:
    """One NCV step. ``noise_draw`` holds four standard-normal variates."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    F, _ = ncv_matrices(dt, target.process_noise_intensity)
    out = F @ np.asarray(state, dtype=float)
    if noise_draw is not None:
        out = out + ncv_noise_factor(dt, target.process_noise_intensity) @ np.asarray(noise_draw, float)
    return out


def nominal_path(target: TargetModel) -> Callable[[np.ndarray], np.ndarray]:
    """Noise-free target trajectory as a function of time, returning (..., 2) positions."""
    p0 = np.asarray(target.initial_position, float)
    v0 = np.asarray(target.initial_velocity, float)

    def path(t):
        t = np.asarray(t, float)
        return p0 + t[..., None] * v0

    return path


def time_grid(t_f: float, dt: float) -> np.ndarray:
    """Uniform grid on [0, t_f] whose spacing is the largest value not exceeding ``dt``."""
    k = max(1, int(math.ceil(t_f / dt - 1e-9)))
    return np.linspace(0.0, t_f, k + 1)


# --- constraints -------------------------------------------------------------

CONSTRAINT_CLASSES = ("bank", "x_bounds", "y_bounds", "nfz", "comm", "speed")


@dataclass
class FeasibilityReport:
    """Signed margins per UAV and constraint class; negative means violated."""

    margins: list[dict[str, float]]

    def violation(self, name: str) -> float:
        return max(max(0.0, -m[name]) for m in self.margins)

    @property
    def violations(self) -> dict[str, float]:
        return {c: self.violation(c) for c in CONSTRAINT_CLASSES}

    @property
    def total_violation(self) -> float:
        return float(sum(self.violations.values()))

    @property
    def feasible(self) -> bool:
        return self.total_violation == 0.0

    def passed(self, uav: int, name: str) -> bool:
        return self.margins[uav][name] >= 0.0


def check_sampled(
    times: np.ndarray,
    positions: Sequence[np.ndarray],
    rolls: Sequence[np.ndarray],
    speeds: Sequence[np.ndarray],
    scenario: Scenario,
    mob_path=None,
    vessel_path=None,
) -> FeasibilityReport:
    """Constraint margins for trajectories already sampled on ``times``."""
    if len(positions) == 0:
        raise ValueError("empty trajectory set")
    mob_path = mob_path or nominal_path(scenario.mob)
    vessel_path = vessel_path or nominal_path(scenario.vessel)
    mob = mob_path(times)
    vessel_final = vessel_path(times[-1:])[0]
    x_min, x_max, y_min, y_max = scenario.mission_bounds
    v_nom = scenario.uav_speed
    margins = []
    for pos, roll, speed in zip(positions, rolls, speeds):
        pos = np.asarray(pos, float)
        margins.append({
            "bank": float(scenario.bank_limit - np.max(np.abs(roll))),
            "x_bounds": float(min(np.min(pos[:, 0] - x_min), np.min(x_max - pos[:, 0]))),
            "y_bounds": float(min(np.min(pos[:, 1] - y_min), np.min(y_max - pos[:, 1]))),
            "nfz": float(np.min(np.linalg.norm(pos - mob, axis=1)) - scenario.nfz_radius),
            "comm": float(scenario.comm_radius - np.linalg.norm(pos[-1] - vessel_final)),
            "speed": float(scenario.speed_band * v_nom - np.max(np.abs(np.asarray(speed) - v_nom))),
        })
    return FeasibilityReport(margins)


def check_constraints(traj_set, scenario: Scenario, mob_path=None, vessel_path=None) -> FeasibilityReport:
    """Evaluate the mission constraints for a team of splines on the scenario time grid."""
    from .kinematics import sample_states

    if len(traj_set) == 0:
        raise ValueError("empty trajectory set")
    times = time_grid(traj_set[0].duration, scenario.grid_dt)
    positions, rolls, speeds = [], [], []
    for traj in traj_set:
        states = sample_states(traj, times, scenario.gravity)
        positions.append(states.position)
        rolls.append(states.roll)
        speeds.append(states.speed)
    return check_sampled(times, positions, rolls, speeds, scenario, mob_path, vessel_path)
