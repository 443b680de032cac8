"""Design evaluation: trajectories, feasibility, Monte Carlo accuracy and cost for one design."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import CameraSpec, CostParams, mission_cost
from .doe import DesignSpace, DesignVector
from .estimation import MonteCarloResult, monte_carlo_rmse
from .kinematics import TrajectorySpline
from .moo import EvaluatedDesign
from .scenario import FeasibilityReport, Scenario, check_constraints
from .sensing import CameraMount
from .trajopt import TrajOptProblem, solve_trajectories

__all__ = ["DesignRecord", "DesignEvaluator", "design_space", "trajectory_gene_bounds"]


@dataclass
class DesignRecord:
    """What an evaluation leaves behind besides the objectives."""

    splines: list[TrajectorySpline]
    report: FeasibilityReport
    trajopt_cost: float
    trajopt_evaluations: int
    monte_carlo: MonteCarloResult


def trajectory_gene_bounds(scenario: Scenario, max_team: int, degree: int):
    """Box for the flattened trajectory genes: free control points inside the mission area, then t_f."""
    x_min, x_max, y_min, y_max = scenario.mission_bounds
    lo = [x_min, y_min] * (max_team * degree) + [0.05 * scenario.mission_duration_max]
    hi = [x_max, y_max] * (max_team * degree) + [scenario.mission_duration_max]
    return tuple(lo), tuple(hi)


def design_space(scenario: Scenario, catalog, team_sizes=(1, 3), per_uav_boresight=False,
                 flatten=None) -> DesignSpace:
    """Design space for a scenario; ``flatten`` defaults to the scenario's trajopt mode."""
    flatten = scenario.trajopt.mode == "flatten_into_ga" if flatten is None else flatten
    bounds = trajectory_gene_bounds(scenario, max(team_sizes), scenario.trajopt.degree) if flatten else None
    return DesignSpace(tuple(team_sizes), len(catalog), per_uav_boresight=per_uav_boresight,
                       trajectory_bounds=bounds)


class DesignEvaluator:
    """Callable mapping a design to its objectives (RMSE_MOB, RMSE_vessel, cost).

    Every design shares the same trajectory-search seed and Monte Carlo seeds
    (common random numbers), so differences between designs are not sampling
    noise and results do not depend on evaluation order.
    """

    def __init__(self, scenario: Scenario, catalog: list[CameraSpec], trials: int | None = None,
                 budget: int | None = None, flatten: bool | None = None):
        self.scenario = scenario
        self.catalog = list(catalog)
        self.trials = scenario.monte_carlo_trials if trials is None else int(trials)
        self.budget = budget
        self.flatten = scenario.trajopt.mode == "flatten_into_ga" if flatten is None else flatten
        self.costs = CostParams.from_scenario(scenario)

    def mounts(self, design: DesignVector) -> list[CameraMount]:
        if not 0 <= design.camera_index < len(self.catalog):
            raise ValueError(f"camera index {design.camera_index} out of range")
        camera = self.catalog[design.camera_index]
        return [CameraMount.from_settings(b, camera, self.scenario.sensor) for b in design.boresights]

    def trajectories(self, design: DesignVector, mounts):
        problem = TrajOptProblem(self.scenario, mounts)
        if not self.flatten:
            res = solve_trajectories(problem, seed=self.scenario.rng_seed, budget=self.budget)
            return res.splines, res.cost, res.evaluations
        if design.trajectory_genes is None:
            raise ValueError("flattened mode needs trajectory genes")
        genes = np.asarray(design.trajectory_genes, float)
        block = 2 * problem.degree
        if (len(genes) - 1) % block or (len(genes) - 1) // block < problem.n_uav:
            raise ValueError("trajectory genes do not match the team size and spline degree")
        z = np.concatenate([genes[: problem.n_uav * block], genes[-1:]])
        return problem.splines(z), math.nan, 0

    def __call__(self, design: DesignVector) -> EvaluatedDesign:
        mounts = self.mounts(design)
        splines, j_cost, n_evals = self.trajectories(design, mounts)
        report = check_constraints(splines, self.scenario)
        mc = monte_carlo_rmse(splines, self.scenario, mounts, trials=self.trials)
        cost = mission_cost(design.n_uav, self.catalog[design.camera_index], self.costs)
        record = DesignRecord(splines, report, j_cost, n_evals, mc)
        return EvaluatedDesign(design, (mc.rmse_mob, mc.rmse_vessel, cost), report.total_violation, 0, record)
