import math

import numpy as np
import pytest
from conftest import straight_spline
from hypothesis import given, settings
from hypothesis import strategies as st

from tradespace.scenario import (
    ScenarioError,
    TargetModel,
    check_constraints,
    load_scenario,
    ncv_matrices,
    propagate_target,
    save_scenario,
    time_grid,
)

MINIMAL = """
[mission]
x_min = {x_min}
x_max = 500
y_min = -500
y_max = 500
comm_radius = 100
mission_duration_max = 120

[uav]
altitude_set = 60
uav_speed = 15
bank_limit = 30

[targets.mob]
initial_position = 100, 0

[targets.vessel]
initial_position = 0, 0
"""


def _load(tmp_path, text):
    p = tmp_path / "s.ini"
    p.write_text(text, encoding="utf-8")
    return load_scenario(p)


def test_minimal_file_takes_defaults(tmp_path):
    sc = _load(tmp_path, MINIMAL.format(x_min=-500))
    assert sc.mission_bounds == (-500, 500, -500, 500)
    assert sc.uav_speed == 15
    assert sc.bank_limit == pytest.approx(math.radians(30))
    assert sc.platform_cost == 500.0
    assert sc.support_cost == 0.0
    assert sc.monte_carlo_trials == 100


def test_degenerate_bounds_rejected(tmp_path):
    with pytest.raises(ScenarioError, match="degenerate mission bounds"):
        _load(tmp_path, MINIMAL.format(x_min=500))


def test_malformed_file_is_a_parse_error(tmp_path):
    with pytest.raises(ScenarioError):
        _load(tmp_path, "x_min = 1\n")


def test_bundled_scenario_valid(scenario):
    assert scenario.altitude(0) == 50
    assert scenario.altitude(5) == scenario.altitude_set[-1]


def test_save_load_round_trip(scenario, tmp_path):
    sc = scenario.with_updates(w1=0.3, w2=0.01, rng_seed=17, nfz_radius=12.5)
    p = tmp_path / "rt.ini"
    save_scenario(sc, p)
    back = load_scenario(p)
    assert back == sc


@given(st.floats(0.5, 80.0), st.floats(1.0, 5000.0), st.floats(0.0, 300.0))
@settings(max_examples=40, deadline=None)
def test_round_trip_arbitrary_values(bank_deg, comm, nfz):
    import tempfile
    from pathlib import Path

    from tradespace.scenario import DEFAULT_SCENARIO

    sc = load_scenario(DEFAULT_SCENARIO).with_updates(
        bank_limit=math.radians(bank_deg), comm_radius=comm, nfz_radius=nfz)
    with tempfile.TemporaryDirectory() as d:
        save_scenario(sc, Path(d) / "s.ini")
        back = load_scenario(Path(d) / "s.ini")
    assert back.comm_radius == sc.comm_radius and back.nfz_radius == sc.nfz_radius
    # angles are stored in degrees, so one rounding step each way is allowed
    assert back.bank_limit == pytest.approx(sc.bank_limit, rel=4e-16, abs=0)


MOB = TargetModel("mob", (0.0, 0.0), (1.0, 0.0), 0.01)


def test_noiseless_propagation():
    out = propagate_target(MOB, [0, 0, 1, 0], 10.0)
    np.testing.assert_array_equal(out, [10, 0, 1, 0])


def test_zero_noise_keeps_velocity():
    t = TargetModel("mob", (0, 0), (0.3, -0.2), 0.0)
    out = propagate_target(t, [5, 5, 0.3, -0.2], 7.0, noise_draw=np.ones(4))
    np.testing.assert_array_equal(out[2:], [0.3, -0.2])


def test_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        propagate_target(MOB, [0, 0, 0, 0], 0.0)


def test_noise_increments_match_discrete_covariance():
    rng = np.random.default_rng(3)
    n = 10_000
    incs = np.array([propagate_target(MOB, np.zeros(4), 1.0, rng.standard_normal(4)) for _ in range(n)])
    _, Q = ncv_matrices(1.0, 0.01)
    emp = np.cov(incs.T)
    for i in range(4):
        assert emp[i, i] == pytest.approx(Q[i, i], rel=0.1)
    assert emp[0, 2] == pytest.approx(Q[0, 2], rel=0.1)


@given(st.floats(0.01, 100.0), st.lists(st.floats(-50, 50), min_size=4, max_size=4))
def test_two_half_steps_equal_one_step(dt, state):
    half = propagate_target(MOB, propagate_target(MOB, state, dt / 2), dt / 2)
    np.testing.assert_allclose(half, propagate_target(MOB, state, dt), rtol=1e-12, atol=1e-9)


def test_time_grid_spacing_never_exceeds_dt():
    g = time_grid(10.5, 1.0)
    assert g[0] == 0 and g[-1] == 10.5 and np.max(np.diff(g)) <= 1.0


# --- constraints ------------------------------------------------------------------------


@pytest.fixture
def open_world(scenario):
    """Static targets far apart so individual constraints can be provoked one at a time."""
    return scenario.with_updates(
        mission_bounds=(-1000.0, 1000.0, -1000.0, 1000.0), nfz_radius=20.0, comm_radius=100.0,
        mob=TargetModel("mob", (500.0, 500.0), (0.0, 0.0), 0.0),
        vessel=TargetModel("vessel", (0.0, 0.0), (0.0, 0.0), 0.0))


def test_straight_flight_passes_everything(open_world):
    # ends 10 m short of the vessel at cruise speed
    tr = straight_spline((-290, 0), (1, 0), 280.0, 280 / 15, 60.0)
    rep = check_constraints([tr], open_world)
    assert rep.feasible, rep.violations
    assert rep.margins[0]["comm"] == pytest.approx(90.0)


def test_nfz_violation_magnitude(open_world):
    # closest approach to the MOB is 19.9 m
    tr = straight_spline((200, 500 - 19.9), (1, 0), 600.0, 40.0, 60.0)
    rep = check_constraints([tr], open_world)
    assert rep.violation("nfz") == pytest.approx(0.1, abs=1e-9)
    assert not rep.passed(0, "nfz")


def test_bounds_violation_magnitude(open_world):
    tr = straight_spline((0, 0), (1, 0), 1005.0, 1005 / 15, 60.0)
    rep = check_constraints([tr], open_world)
    assert rep.violation("x_bounds") == pytest.approx(5.0, abs=1e-9)
    assert rep.violation("y_bounds") == 0.0


def test_empty_trajectory_set(open_world):
    with pytest.raises(ValueError):
        check_constraints([], open_world)


@given(st.floats(0.0, 200.0), st.floats(0.0, 1.0), st.floats(1.0, 300.0), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_constraints_monotone_in_radii(nfz, shrink, comm, grow):
    from tradespace.scenario import DEFAULT_SCENARIO

    base = load_scenario(DEFAULT_SCENARIO).with_updates(nfz_radius=nfz, comm_radius=comm)
    easier = base.with_updates(nfz_radius=nfz * shrink, comm_radius=comm * (1 + grow))
    tr = [straight_spline((0, 0), (1, 0.3), 600.0, 40.0, 60.0)]
    a, b = check_constraints(tr, base), check_constraints(tr, easier)
    for c in ("nfz", "comm"):
        if a.passed(0, c):
            assert b.passed(0, c)
