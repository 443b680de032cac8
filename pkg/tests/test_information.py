import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg
from conftest import straight_spline
from hypothesis import given, settings
from hypothesis import strategies as st

from tradespace.catalog import CameraSpec
from tradespace.information import (
    UnobservableError,
    fim_step,
    measurement_information,
    pcrlb_history,
    pcrlb_trace,
    prior_information,
    trajectory_cost,
)
from tradespace.scenario import ncv_matrices
from tradespace.sensing import CameraMount


def _spd(rng, n=4, floor=0.1):
    A = rng.normal(size=(n, n))
    return A @ A.T + floor * np.eye(n)


def test_identity_dynamics_conserve_information():
    J = _spd(np.random.default_rng(0))
    np.testing.assert_allclose(fim_step(J, np.eye(4), np.zeros((4, 4))), J, rtol=1e-12)


def test_measurement_information_adds():
    rng = np.random.default_rng(1)
    J = _spd(rng)
    H, R = rng.normal(size=(2, 2)), np.diag([0.01, 0.02])
    D = measurement_information(H, R)
    np.testing.assert_allclose(fim_step(J, np.eye(4), np.zeros((4, 4)), H, R), J + D, rtol=1e-12)


def test_singular_prior_without_process_noise():
    with pytest.raises(UnobservableError):
        fim_step(np.zeros((4, 4)), np.eye(4), np.zeros((4, 4)))


def batch_information(J0, F, Q, schedule):
    """Joint information over every state on the grid, then the marginal of the last one."""
    K = len(schedule)
    n = 4 * (K + 1)
    A = np.zeros((n, n))
    A[:4, :4] += J0
    Qi = np.linalg.inv(Q)
    for k in range(K):
        # factor x_{k+1} - F x_k ~ N(0, Q)
        G = np.zeros((4, n))
        G[:, 4 * k:4 * k + 4] = -F
        G[:, 4 * k + 4:4 * k + 8] = np.eye(4)
        A += G.T @ Qi @ G
        for H, R in schedule[k]:
            Hf = np.zeros((2, n))
            Hf[:, 4 * k + 4:4 * k + 6] = H
            A += Hf.T @ np.linalg.solve(R, Hf)
    a, b, c = A[:-4, :-4], A[:-4, -4:], A[-4:, -4:]
    return c - b.T @ np.linalg.solve(a, b)


def test_recursion_matches_batch_oracle():
    rng = np.random.default_rng(5)
    F, Q = ncv_matrices(1.0, 0.01)
    J0 = prior_information(100.0, 1.0)
    R = np.eye(2) * 1e-6
    schedule = []
    for k in range(100):
        step = []
        for u in range(2):
            if (k // (7 + 5 * u)) % 2 == 0:
                step.append((rng.normal(scale=0.01, size=(2, 2)), R))
        schedule.append(step)
    J = J0
    for step in schedule:
        J = fim_step(J, F, Q, [h for h, _ in step] or None, [r for _, r in step] or None)
    np.testing.assert_allclose(J, batch_information(J0, F, Q, schedule), rtol=1e-6)


def test_trace_of_diagonal():
    assert pcrlb_trace(np.diag([4.0, 4.0, 1.0, 1.0])) == pytest.approx(0.5)


def test_trace_of_singular_is_infinite():
    J = np.diag([4.0, 0.0, 1.0, 1.0])
    assert pcrlb_trace(J) == math.inf


def test_trace_matches_dense_inverse():
    rng = np.random.default_rng(7)
    for _ in range(20):
        J = _spd(rng)
        ref = np.trace(scipy.linalg.inv(J)[:2, :2])
        assert pcrlb_trace(J) == pytest.approx(ref, rel=1e-9)


# --- trajectory cost ---------------------------------------------------------------


@pytest.fixture
def flyover(scenario):
    """Two UAVs crossing over the MOB with nadir cameras, so the MOB is always gated."""
    mob = np.array(scenario.mob.initial_position)
    tr = [straight_spline(mob + [-225, -60], (1, 0), 450, 30, 110),
          straight_spline(mob + [60, -225], (0, 1), 450, 30, 80)]
    cam = CameraSpec("big", 5328, 4608)
    mounts = [CameraMount.from_settings(math.pi / 2, cam, scenario.sensor)] * 2
    return tr, mounts


def test_w1_one_drops_vessel_term(scenario, flyover):
    tr, mounts = flyover
    sc = scenario.with_updates(w1=1.0, w2=0.5)
    hist = pcrlb_history(tr, sc, mounts)
    assert trajectory_cost(tr, sc, mounts) == pytest.approx(hist.trace_mob[-1] + 0.5 * 30.0, rel=1e-12)


def test_closed_gates_give_infinite_cost_without_prior(scenario):
    far = [straight_spline((-100, -250), (0, 1), 100, 10, 50)]
    mounts = [CameraMount.from_settings(0.0, CameraSpec("c", 1280, 720), scenario.sensor)]
    assert trajectory_cost(far, scenario, mounts, prior=None) == math.inf
    # with the default prior the bound stays finite
    assert math.isfinite(trajectory_cost(far, scenario, mounts))


def test_noisier_camera_raises_the_bound(scenario, flyover):
    tr, mounts = flyover
    base = pcrlb_history(tr, scenario, mounts)
    noisy = [replace(m, noise_scale=2.0 * m.noise_scale) for m in mounts]
    worse = pcrlb_history(tr, scenario, noisy)
    assert worse.trace_mob[-1] > base.trace_mob[-1]
    assert worse.trace_vessel[-1] >= base.trace_vessel[-1]


def test_adding_a_uav_never_hurts(scenario, flyover):
    tr, mounts = flyover
    one = pcrlb_history(tr[:1], scenario, mounts[:1])
    two = pcrlb_history(tr, scenario, mounts)
    assert two.trace_mob[-1] <= one.trace_mob[-1]
    assert two.trace_vessel[-1] <= one.trace_vessel[-1]


# --- properties --------------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.integers(0, 10))
@settings(max_examples=50, deadline=None)
def test_more_measurements_never_raise_trace(seed, n):
    rng = np.random.default_rng(seed)
    J = prior_information(50.0, 1.0)
    Hs = [rng.normal(scale=0.02, size=(2, 2)) for _ in range(n + 1)]
    R = np.eye(2) * 1e-4
    traces = []
    for m in range(n + 2):
        Jm = J
        for H in Hs[:m]:
            Jm = fim_step(Jm, np.eye(4), np.zeros((4, 4)), H, R)
        traces.append(pcrlb_trace(Jm))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(traces, traces[1:]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_loewner_order_orders_traces(seed):
    rng = np.random.default_rng(seed)
    Jb = _spd(rng)
    Ja = Jb + _spd(rng, floor=0.0)
    assert pcrlb_trace(Ja) <= pcrlb_trace(Jb) * (1 + 1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
@settings(max_examples=50, deadline=None)
def test_extra_uav_schedule_never_raises_trace(seed, steps):
    rng = np.random.default_rng(seed)
    F, Q = ncv_matrices(1.0, 0.01)
    R = np.eye(2) * 1e-5
    Ja = Jb = prior_information(100.0, 1.0)
    for _ in range(steps):
        base = [rng.normal(scale=0.01, size=(2, 2))] if rng.random() < 0.5 else []
        extra = [rng.normal(scale=0.01, size=(2, 2))] if rng.random() < 0.5 else []
        Jb = fim_step(Jb, F, Q, base or None, [R] * len(base) or None)
        Ja = fim_step(Ja, F, Q, (base + extra) or None, [R] * len(base + extra) or None)
    assert pcrlb_trace(Ja) <= pcrlb_trace(Jb) * (1 + 1e-9)
    assert np.min(np.linalg.eigvalsh(Ja)) >= -1e-10
