import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from planar_atlas.estimator import PlaneMapAnalyzer

from conftest import F0_ROOTS, pair_distance


@pytest.fixture(scope="module")
def fitted():
    return PlaneMapAnalyzer().fit()


def test_params_and_clone():
    est = PlaneMapAnalyzer(map="builtin:F1", window=(-2, -2, 2, 2), grid=48)
    params = est.get_params()
    assert params["map"] == "builtin:F1" and params["grid"] == 48
    twin = clone(est)
    assert twin.get_params() == params and not hasattr(twin, "critical_curves_")
    est.set_params(tol=1e-8)
    assert est.tol == 1e-8


def test_fit_traces_critical_set(fitted):
    assert len(fitted.critical_curves_) == 2
    assert sorted(len(c.cusps) for c in fitted.critical_curves_) == [3, 5]
    assert fitted.n_features_in_ == 2


def test_transform_maps_points(fitted):
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(fitted.transform(X), [[0, 0], [4.5, 0], [-2.5, 0]])


def test_predict_counts(fitted):
    counts = fitted.predict([[0.0, 0.0], [1000.0, 0.0]])
    assert counts.tolist() == [9, 3]
    assert pair_distance(fitted.preimages((0.0, 0.0)).points, F0_ROOTS) < 1e-5


def test_fit_window_from_points():
    est = PlaneMapAnalyzer(map="builtin:F2").fit(np.array([[-1.5, -1.5], [1.5, 1.5]]))
    assert np.allclose(est.window_, (-1.8, -1.8, 1.8, 1.8))
    assert len(est.critical_curves_) == 1


def test_validation_errors(fitted):
    with pytest.raises(NotFittedError):
        PlaneMapAnalyzer().transform([[0.0, 0.0]])
    with pytest.raises(ValueError):
        fitted.transform([[0.0, 0.0, 1.0]])
    with pytest.raises(ValueError):
        fitted.predict([[np.nan, 0.0]])
    with pytest.raises(ValueError):
        PlaneMapAnalyzer(mode="w").fit()
