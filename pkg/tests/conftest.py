import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from planar_atlas.critical import Window, find_critical_curves, image_of_curve
from planar_atlas.mapdef import builtin_map

settings.register_profile("atlas", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("atlas")

# windows and scan grids used throughout the suite
SETUPS = {
    "F0": (Window.square(3.0), 64),
    "F1": (Window.square(2.0), 64),
    "F2": (Window.square(3.0), 32),
    "F3": (Window.square(10.0), 96),
}


@functools.lru_cache(maxsize=None)
def builtin(tag):
    return builtin_map(tag)


@functools.lru_cache(maxsize=None)
def traced(tag):
    window, grid = SETUPS[tag]
    pm = builtin(tag)
    curves = find_critical_curves(pm, window, grid)
    images = [image_of_curve(pm, c) for c in curves]
    return pm, curves, images


def pair_distance(a, b) -> float:
    """Largest distance in the optimal matching of two equal-size point sets."""
    from scipy.optimize import linear_sum_assignment

    a, b = np.asarray(a, float).reshape(-1, 2), np.asarray(b, float).reshape(-1, 2)
    assert len(a) == len(b), (len(a), len(b))
    if len(a) == 0:
        return 0.0
    cost = np.hypot(*(a[:, None, :] - b[None, :, :]).transpose(2, 0, 1))
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].max())


F0_ROOTS = [(1.864148, 1.450656), (1.864148, -1.450656), (-0.818866, 2.665700), (-0.818866, -2.665700),
            (0.204718, 0.319589), (0.204718, -0.319589), (0.0, 0.0), (-0.5, 0.0), (-2.0, 0.0)]


@pytest.fixture(scope="session")
def f0():
    return traced("F0")


@pytest.fixture(scope="session")
def f1():
    return traced("F1")


@pytest.fixture(scope="session")
def f2():
    return traced("F2")


@pytest.fixture(scope="session")
def f3():
    return traced("F3")
