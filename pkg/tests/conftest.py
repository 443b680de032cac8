import math

import numpy as np
import pytest

from tradespace.catalog import load_catalog
from tradespace.kinematics import TrajectorySpline
from tradespace.scenario import DEFAULT_SCENARIO, load_scenario


@pytest.fixture(scope="session")
def scenario():
    return load_scenario(DEFAULT_SCENARIO)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


def straight_spline(start, direction, length, duration, altitude, degree=8):
    """Uniformly spaced collinear control points: constant speed, zero curvature."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    P = np.array([np.asarray(start, float) + d * length * i / degree for i in range(degree + 1)])
    return TrajectorySpline(P, duration, altitude)


def dominates(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def brute_fronts(F, violation=None):
    """O(n^2) reference: peel off designs no remaining design constraint-dominates."""
    F = np.asarray(F, float)
    n = len(F)
    v = np.zeros(n) if violation is None else np.asarray(violation, float)

    def cdom(i, j):
        if v[i] == 0 and v[j] > 0:
            return True
        if v[i] > 0 and v[j] > 0:
            return v[i] < v[j]
        if v[i] > 0:
            return False
        return dominates(F[i], F[j])

    left = set(range(n))
    fronts = []
    while left:
        front = sorted(i for i in left if not any(cdom(j, i) for j in left if j != i))
        fronts.append(front)
        left -= set(front)
    return fronts


DEG = math.pi / 180
