import math
import pickle

import pytest

from tradespace.catalog import CostParams, mission_cost
from tradespace.doe import DesignVector, lhs_sample
from tradespace.pipeline import DesignEvaluator, design_space, trajectory_gene_bounds
from tradespace.scenario import check_constraints


def test_evaluator_objectives_and_record(scenario, catalog):
    ev = DesignEvaluator(scenario, catalog, trials=4, budget=40)
    d = DesignVector(1, 0, math.radians(50))
    r = ev(d)
    assert r.objectives[2] == mission_cost(1, catalog[0], CostParams.from_scenario(scenario))
    assert r.objectives[0] == r.result.monte_carlo.rmse_mob
    assert r.violation == r.result.report.total_violation
    assert r.result.trajopt_evaluations == 40
    # same design, same numbers: trajectory search and trials share fixed seeds
    assert ev(d).objectives == r.objectives
    assert pickle.loads(pickle.dumps(ev))(d).objectives == r.objectives


def test_evaluator_rejects_bad_camera(scenario, catalog):
    with pytest.raises(ValueError):
        DesignEvaluator(scenario, catalog, trials=2, budget=10)(DesignVector(1, len(catalog), 0.5))


def test_flattened_mode_uses_genes_directly(scenario, catalog):
    space = design_space(scenario, catalog, flatten=True)
    deg = scenario.trajopt.degree
    assert space.n_trajectory_genes == 3 * 2 * deg + 1
    lo, hi = trajectory_gene_bounds(scenario, 3, deg)
    assert hi[-1] == scenario.mission_duration_max and lo[-1] > 0
    ev = DesignEvaluator(scenario, catalog, trials=2, flatten=True)
    for d in lhs_sample(space, 3, seed=0):
        r = ev(d)
        splines = r.result.splines
        assert len(splines) == d.n_uav
        assert splines[0].duration == pytest.approx(d.trajectory_genes[-1])
        assert r.violation == pytest.approx(check_constraints(splines, scenario).total_violation)
        assert r.result.trajopt_evaluations == 0
    with pytest.raises(ValueError):
        ev(DesignVector(1, 0, 0.5))


def test_nested_space_has_no_trajectory_genes(scenario, catalog):
    space = design_space(scenario, catalog, team_sizes=(1, 2), flatten=False)
    assert space.n_trajectory_genes == 0
    assert space.team_size_options == (1, 2) and space.n_cameras == len(catalog)
