"""Sweep the boresight angle for one and three UAVs and print the MOB/vessel Pareto fronts.

Run: python demos/02_boresight_sweep.py   (about 20 s)
"""

import math

from tradespace.catalog import load_catalog
from tradespace.doe import DesignVector
from tradespace.moo import extract_pareto
from tradespace.pipeline import DesignEvaluator
from tradespace.scenario import DEFAULT_SCENARIO, load_scenario

scenario = load_scenario(DEFAULT_SCENARIO)
catalog = load_catalog()
evaluator = DesignEvaluator(scenario, catalog, trials=100)
camera = 3

for n_uav in (1, 3):
    archive = [evaluator(DesignVector(n_uav, camera, math.radians(a))) for a in range(0, 91, 5)]
    front = extract_pareto(archive, (0, 1))
    print(f"\n{n_uav} UAV(s), camera {catalog[camera].id}: {len(front)} Pareto-optimal angles")
    print("  angle   RMSE_MOB  RMSE_vessel")
    for e in front:
        print(f"  {math.degrees(e.design.boresight):5.1f}  {e.objectives[0]:9.3f}  {e.objectives[1]:11.3f}")
