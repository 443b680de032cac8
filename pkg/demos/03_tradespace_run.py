"""A small three-objective NSGA-II run over team size, camera and boresight.

Run: python demos/03_tradespace_run.py   (about 1 min)
The `tradespace run` command does the same and writes the CSV artifacts.
"""

import math

from tradespace.catalog import load_catalog
from tradespace.doe import lhs_sample
from tradespace.moo import GaConfig, evolve, extract_pareto, front_projection
from tradespace.pipeline import DesignEvaluator, design_space
from tradespace.scenario import DEFAULT_SCENARIO, load_scenario

scenario = load_scenario(DEFAULT_SCENARIO)
catalog = load_catalog()
space = design_space(scenario, catalog)
config = GaConfig(population=12, generations=3, seed=scenario.rng_seed)
evaluator = DesignEvaluator(scenario, catalog, trials=20)

result = evolve(space, lhs_sample(space, config.population, config.seed), config, evaluator)
front = extract_pareto(result.archive)
print(f"{len(result.archive)} designs evaluated, {len(front)} on the three-objective front\n")
print("n_uav  camera           boresight  RMSE_MOB  RMSE_vessel     cost")
for e in front:
    d = e.design
    print(f"{d.n_uav:5d}  {catalog[d.camera_index].id:15s}  {math.degrees(d.boresight):9.1f}"
          f"  {e.objectives[0]:8.3f}  {e.objectives[1]:11.3f}  {e.objectives[2]:7.1f}")

print("\ncost against RMSE_MOB (diminishing returns show as a flattening curve):")
for cost, rmse in front_projection(front, 2, 0):
    print(f"  {cost:8.1f}  {rmse:8.3f}")
