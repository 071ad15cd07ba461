"""scikit-learn style front end.

``fit`` traces the critical set of a map over a window, ``transform`` maps
points, ``predict`` counts preimages of target points.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .continuation import solve_preimages
from .critical import Window, find_critical_curves, image_of_curve
from .pipeline import PipelineConfig, load_map, resolve


class PlaneMapAnalyzer(BaseEstimator, TransformerMixin):
    """Critical set and preimage counts of one plane map.

    Parameters mirror the command line: ``map`` is ``builtin:<tag>`` or an
    expression in ``mode`` (``z`` or ``xy``).
    """

    def __init__(self, map="builtin:F0", mode="z", window=None, grid=None, step=None, tol=1e-9):
        self.map = map
        self.mode = mode
        self.window = window
        self.grid = grid
        self.step = step
        self.tol = tol

    def fit(self, X=None, y=None):
        """Trace the critical set.  ``X``, if given, is a set of domain points
        whose bounding box (padded by 10%) becomes the window."""
        window = self.window
        if X is not None:
            X = check_array(X, ensure_min_samples=2)
            if X.shape[1] != 2:
                raise ValueError(f"expected points with 2 coordinates, got {X.shape[1]}")
            lo, hi = X.min(axis=0), X.max(axis=0)
            pad = 0.1 * (hi - lo) + 1e-9
            window = (lo[0] - pad[0], lo[1] - pad[1], hi[0] + pad[0], hi[1] + pad[1])
        config = PipelineConfig(map=self.map, mode=self.mode, window=window, grid=self.grid,
                                step=self.step, tol=self.tol)
        self.map_ = load_map(self.map, self.mode)
        self.window_, self.grid_, self.step_ = resolve(config, self.map_)
        self.critical_curves_ = find_critical_curves(self.map_, Window(*self.window_), self.grid_, h=self.step_)
        self.image_curves_ = [image_of_curve(self.map_, c) for c in self.critical_curves_]
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        """Images of the rows of ``X``."""
        check_is_fitted(self, "critical_curves_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"expected points with 2 coordinates, got {X.shape[1]}")
        return self.map_.image(X)

    def preimages(self, q):
        check_is_fitted(self, "critical_curves_")
        return solve_preimages(self.map_, np.asarray(q, float), self.critical_curves_,
                               image_curves=self.image_curves_, tol_rel=self.tol,
                               oracle_window=self.window_)

    def predict(self, X):
        """Number of preimages of each target row of ``X``."""
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"expected points with 2 coordinates, got {X.shape[1]}")
        return np.array([len(self.preimages(q)) for q in X], dtype=int)
