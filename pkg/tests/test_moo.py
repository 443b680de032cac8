import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_fronts, dominates
from tradespace.doe import DesignSpace, DesignVector, lhs_sample
from tradespace.moo import (
    EvaluatedDesign,
    GaConfig,
    crowding_distance,
    evolve,
    extract_pareto,
    front_projection,
    non_dominated_sort,
)

REFERENCE_FRONT = [  # single UAV; boresight deg, rmse_mob, rmse_vessel
    (33.0, 1.08, 4.34), (34.5, 1.39, 2.99), (37.4, 1.70, 2.78), (41.1, 1.31, 3.60), (44.3, 1.30, 3.83),
    (46.6, 1.60, 2.88), (46.6, 1.20, 4.32), (46.7, 1.30, 4.29), (48.2, 0.83, 4.82),
]


def _ev(obj, violation=0.0, boresight=0.5, gen=0):
    return EvaluatedDesign(DesignVector(1, 0, boresight), obj, violation, gen)


# --- sorting and crowding -------------------------------------------------------------


def test_sort_small_example():
    pop = [_ev((1, 2, 5)), _ev((2, 1, 5)), _ev((3, 3, 5))]
    assert non_dominated_sort(pop) == [[0, 1], [2]]
    assert non_dominated_sort([_ev((1, 1, 1))]) == [[0]]


def test_sort_matches_oracle_on_random_points():
    F = np.random.default_rng(0).random((50, 3))
    assert non_dominated_sort(F) == brute_fronts(F)


def test_sort_constraint_domination():
    F = [[0.0, 0.0], [5.0, 5.0], [1.0, 1.0], [9.0, 9.0]]
    viol = [2.0, 0.0, 1.0, 0.0]
    assert non_dominated_sort(F, viol) == [[1], [3], [2], [0]]


def test_sort_empty_raises():
    with pytest.raises(ValueError):
        non_dominated_sort([])


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 60), m=st.sampled_from([2, 3]), seed=st.integers(0, 2**32 - 1),
       grid=st.booleans(), infeasible=st.booleans())
def test_sort_oracle_property(n, m, seed, grid, infeasible):
    rng = np.random.default_rng(seed)
    # coarse grids force ties and duplicates
    F = rng.integers(0, 4, (n, m)).astype(float) if grid else rng.random((n, m))
    viol = np.where(rng.random(n) < 0.3, rng.integers(1, 3, n), 0).astype(float) if infeasible else None
    fronts = non_dominated_sort(F, viol)
    assert [sorted(f) for f in fronts] == brute_fronts(F, viol)


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([[0, 1], [1, 0]])))
    d = crowding_distance([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)
    d = crowding_distance([[0.0, 2.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 0.0]])
    assert np.count_nonzero(d[1:4] == 0.0) >= 1


def test_crowding_accepts_designs():
    front = [_ev((0, 2, 1)), _ev((1, 1, 1)), _ev((2, 0, 1))]
    assert crowding_distance(front)[1] == pytest.approx(2.0)


# --- extraction -----------------------------------------------------------------------


def _reference_archive():
    return [EvaluatedDesign(DesignVector(1, 0, math.radians(a)), (m, v, 500.0)) for a, m, v in REFERENCE_FRONT]


def test_reference_front_loses_only_its_dominated_row():
    front = extract_pareto(_reference_archive(), (0, 1))
    for a in front:
        for b in front:
            assert not dominates(a.objectives[:2], b.objectives[:2])
    angles = sorted(round(math.degrees(d.design.boresight), 1) for d in front)
    # 44.3 deg (1.30, 3.83) dominates 46.7 deg (1.30, 4.29); every other row survives
    assert angles == sorted(a for a, _, _ in REFERENCE_FRONT if a != 46.7)
    assert [d.objectives[0] for d in front] == sorted(d.objectives[0] for d in front)


def test_single_objective_mask_returns_minimizers():
    arch = [_ev((3, 1, 1)), _ev((1, 5, 2)), _ev((1, 7, 3)), _ev((0.5, 9, 4), violation=1.0)]
    assert [d.objectives for d in extract_pareto(arch, (0,))] == [(1, 5, 2), (1, 7, 3)]
    assert [d.objectives for d in extract_pareto(arch, [False, False, True])] == [(3, 1, 1)]


def test_all_infeasible_gives_empty_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        assert extract_pareto([_ev((1, 1, 1), 2.0), _ev((0, 0, 0), 1.0)]) == []
    assert "feasible" in caplog.text


def test_extract_rejects_empty_archive_and_bad_mask():
    with pytest.raises(ValueError):
        extract_pareto([])
    with pytest.raises(ValueError):
        extract_pareto([_ev((1, 1, 1))], (3,))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_extract_matches_pairwise_filter(n, seed):
    rng = np.random.default_rng(seed)
    F = rng.integers(0, 5, (n, 3)).astype(float)
    viol = np.where(rng.random(n) < 0.25, 1.0, 0.0)
    arch = [_ev(f, v) for f, v in zip(F, viol)]
    got = {id(d) for d in extract_pareto(arch)}
    feas = [d for d in arch if d.feasible]
    want = {id(d) for d in feas if not any(dominates(o.objectives, d.objectives) for o in feas)}
    assert got == want


def test_front_projection_is_sorted_and_non_dominated():
    front = [_ev((1, 9, 3)), _ev((2, 1, 1)), _ev((3, 2, 2)), _ev((4, 0, 0.5))]
    P = front_projection(front, 2, 0)
    assert P.tolist() == [[0.5, 4.0], [1.0, 2.0], [3.0, 1.0]]


# --- evolution ------------------------------------------------------------------------

A, B = 0.3, 1.2


class Spheres:
    """Two shifted parabolas in the boresight angle; the true front is A <= x <= B."""

    def __init__(self, fail_below=None):
        self.fail_below = fail_below

    def __call__(self, design):
        x = design.boresight
        if self.fail_below is not None and x < self.fail_below:
            raise RuntimeError("simulated failure")
        return EvaluatedDesign(design, ((x - A) ** 2, (x - B) ** 2, 1.0))


def _hypervolume(points, ref):
    P = sorted((float(p[0]), float(p[1])) for p in points if p[0] < ref[0] and p[1] < ref[1])
    hv, y_prev = 0.0, ref[1]
    for x, y in P:
        if y < y_prev:
            hv += (ref[0] - x) * (y_prev - y)
            y_prev = y
    return hv


SPACE = DesignSpace(team_size_options=(1,), n_cameras=1)


def test_spheres_front_hypervolume():
    cfg = GaConfig(population=40, generations=50, seed=1, objectives=(0, 1))
    res = evolve(SPACE, lhs_sample(SPACE, 40, 1), cfg, Spheres())
    ref = ((B - A) ** 2, (B - A) ** 2)
    s = np.linspace(A, B, 20001)
    true_hv = _hypervolume(np.column_stack([(s - A) ** 2, (s - B) ** 2]), ref)
    front = extract_pareto(res.population, (0, 1))
    got = _hypervolume([d.objectives[:2] for d in front], ref)
    assert got >= 0.95 * true_hv


def test_no_op_operators_leave_population_unchanged():
    cfg = GaConfig(population=8, generations=1, crossover_prob=0.0, mutation_prob=0.0,
                   discrete_mutation_prob=0.0, seed=3, objectives=(0, 1))
    res = evolve(SPACE, lhs_sample(SPACE, 8, 0), cfg, Spheres())
    assert {e.design for e in res.history[1]} == {e.design for e in res.history[0]}
    assert len(res.archive) == 8


def _archive_rows(res):
    return [(e.design, e.objectives, e.violation, e.generation) for e in res.archive]


def test_same_seed_same_archive_for_any_map():
    space = DesignSpace(team_size_options=(1, 3), n_cameras=4)
    cfg = GaConfig(population=12, generations=4, seed=9)
    a = evolve(space, lhs_sample(space, 12, 2), cfg, Spheres())
    with ThreadPoolExecutor(3) as pool:
        b = evolve(space, lhs_sample(space, 12, 2), cfg, Spheres(), map_fn=pool.map)
    assert _archive_rows(a) == _archive_rows(b)
    c = evolve(space, lhs_sample(space, 12, 2), GaConfig(population=12, generations=4, seed=10), Spheres())
    assert _archive_rows(a) != _archive_rows(c)


def test_initial_population_padded_by_lhs():
    cfg = GaConfig(population=10, generations=0, objectives=(0, 1))
    res = evolve(SPACE, lhs_sample(SPACE, 3, 0), cfg, Spheres())
    assert len(res.population) == 10


def test_failed_evaluations_become_infeasible(caplog):
    cfg = GaConfig(population=8, generations=2, seed=0, objectives=(0, 1))
    with caplog.at_level(logging.WARNING):
        res = evolve(SPACE, lhs_sample(SPACE, 8, 4), cfg, Spheres(fail_below=0.4))
    failed = [e for e in res.archive if e.design.boresight < 0.4]
    assert failed and all(e.violation == math.inf and not e.feasible for e in failed)
    assert all(e.feasible for e in res.archive if e.design.boresight >= 0.4)
    assert "simulated failure" in caplog.text


def _weakly_covered(new, old):
    return all(any(np.all(np.asarray(q) <= np.asarray(p)) for q in new) for p in old)


def _undominated_by(new, old):
    return not any(dominates(p, q) for p in old for q in new)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), mode=st.sampled_from(["constraint-domination", "discard"]))
def test_elitism_and_bounds(seed, mode):
    space = DesignSpace(team_size_options=(1, 2, 3), n_cameras=3, per_uav_boresight=True,
                        trajectory_bounds=((-5.0, 0.0), (5.0, 1.0)))

    def evaluator(d):
        g = np.asarray(d.trajectory_genes)
        x = float(np.mean(d.boresights))
        viol = max(0.0, g[0] - 3.0)
        return EvaluatedDesign(d, ((x - A) ** 2 + g[1], (x - B) ** 2 + d.camera_index, d.n_uav), viol)

    cfg = GaConfig(population=10, generations=6, seed=seed, mutation_prob=0.5, constraint_mode=mode)
    res = evolve(space, lhs_sample(space, 10, seed), cfg, evaluator)
    for e in res.archive:
        e.design.validate(space)
    for prev, nxt in zip(res.history, res.history[1:]):
        pf = [e.objectives for e in prev if e.feasible]
        nf = [e.objectives for e in nxt if e.feasible]
        if pf:
            old = [pf[i] for i in non_dominated_sort(pf)[0]]
            new = [nf[i] for i in non_dominated_sort(nf)[0]]
            assert _undominated_by(new, old)
            # crowding truncation can only drop old points when the first front overflows
            if len(new) < cfg.population:
                assert _weakly_covered(new, old)


def test_config_validation():
    for bad in (dict(population=5), dict(population=2), dict(crossover_prob=1.5),
                dict(constraint_mode="x"), dict(objectives=())):
        with pytest.raises(ValueError):
            GaConfig(**bad)


def test_evaluated_design_invariants():
    with pytest.raises(ValueError):
        _ev((math.nan, 1.0, 1.0))
    assert not _ev((math.nan, 1.0, 1.0), violation=math.inf).feasible
    with pytest.raises(ValueError):
        _ev((1.0, 1.0, 1.0), violation=-1.0)
