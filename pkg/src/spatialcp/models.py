"""Base point predictors."""
from __future__ import annotations

import abc

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, RngSpec, kfold_indices
from .errors import DimensionMismatch, EmptyTrainSet

__all__ = [
    "Predictor",
    "KernelRegressor",
    "fit_kernel_regression",
    "predict",
    "select_bandwidth",
    "default_bandwidth_grid",
]

_CHUNK = 2048


class Predictor(abc.ABC):
    """Point predictor contract: ``fit`` on training rows, then ``predict``."""

    n_features: int | None = None

    @abc.abstractmethod
    def fit(self, X, y) -> "Predictor": ...

    @abc.abstractmethod
    def _predict(self, X: np.ndarray) -> np.ndarray: ...

    def predict(self, X) -> np.ndarray:
        """Predictions for rows of ``X`` (shape (m, p)) or one vector (p,)."""
        if self.n_features is None:
            raise RuntimeError(f"{type(self).__name__} is not fitted")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        out = self._predict(X)
        return float(out[0]) if single else out


class KernelRegressor(Predictor):
    """Nadaraya-Watson regression with a Gaussian kernel on the full feature vector.

    Weights are ``exp(-|x - x_i|^2 / (2 h^2))``. They are evaluated relative
    to the nearest training point, so when every raw weight would underflow
    the prediction degrades to the nearest neighbour's response instead of
    NaN.
    """

    def __init__(self, bandwidth: float):
        if not bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
        self.bandwidth = float(bandwidth)

    def __repr__(self):
        return f"KernelRegressor(bandwidth={self.bandwidth:g})"

    def fit(self, X, y) -> "KernelRegressor":
        X = np.array(X, dtype=float, ndmin=2)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) == 0:
            raise EmptyTrainSet("no training points")
        if len(X) != len(y):
            raise DimensionMismatch(f"{len(X)} feature rows for {len(y)} responses")
        self.X_, self.y_ = X, y
        self.n_features = X.shape[1]
        return self

    def _predict(self, X):
        out = np.empty(len(X))
        scale = 2.0 * self.bandwidth**2
        for i in range(0, len(X), _CHUNK):
            d2 = cdist(X[i:i + _CHUNK], self.X_, "sqeuclidean")
            d2 -= d2.min(axis=1, keepdims=True)
            w = np.exp(-d2 / scale)
            out[i:i + _CHUNK] = (w @ self.y_) / w.sum(axis=1)
        return out


def predict(model: Predictor, features) -> float:
    """Prediction for a single feature vector."""
    return model.predict(np.asarray(features, dtype=float).ravel())


def default_bandwidth_grid(X) -> np.ndarray:
    """Candidate bandwidths scaled to the overall feature spread."""
    spread = float(np.sqrt(np.var(np.atleast_2d(X), axis=0).sum())) or 1.0
    return spread * np.array([0.01, 0.02, 0.05, 0.1, 0.2, 0.5])


def select_bandwidth(X, y, grid=None, folds: int = 5, rng: RngSpec = RngSpec(0)) -> tuple[float, dict]:
    """Pick the bandwidth with the lowest k-fold mean squared error.

    Ties go to the smaller bandwidth. Returns ``(h, {h: mse})``.
    """
    X = np.array(X, dtype=float, ndmin=2)
    y = np.asarray(y, dtype=float).ravel()
    grid = sorted(float(h) for h in (default_bandwidth_grid(X) if grid is None else grid))
    splits = kfold_indices(np.arange(len(y)), folds, rng)
    scores = {}
    for h in grid:
        err = 0.0
        for fit_idx, hold_idx in splits:
            m = KernelRegressor(h).fit(X[fit_idx], y[fit_idx])
            err += float(((m.predict(X[hold_idx]) - y[hold_idx]) ** 2).sum())
        scores[h] = err / len(y)
    best = min(grid, key=lambda h: (scores[h], h))
    return best, scores


def fit_kernel_regression(train: Dataset, h: float | None = None, grid=None,
                          rng: RngSpec = RngSpec(0)) -> KernelRegressor:
    """Fit a kernel regressor on ``train``.

    With ``h=None`` the bandwidth is chosen by 5-fold cross-validation on
    the training rows.
    """
    if len(train) == 0:
        raise EmptyTrainSet("no training points")
    if h is None:
        if len(train) < 5:
            h = float(default_bandwidth_grid(train.features)[-1])
        else:
            h, _ = select_bandwidth(train.features, train.responses, grid, 5, rng)
    return KernelRegressor(h).fit(train.features, train.responses)
