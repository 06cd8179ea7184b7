"""Non-conformity scores, weighted quantiles and the interval constructors.

Five methods share one calibration/prediction surface:

* ``LSCP``  - forest-learned weights over calibration residuals, where each
  residual is described by its k nearest calibration neighbours'
  residuals; asymmetric interval tightened over beta.
* ``GSCP``  - one global split-conformal quantile of absolute scores.
* ``SLSCP`` - Gaussian kernel in spatial distance over the k nearest
  calibration sites.
* ``LCP``   - Gaussian kernel in feature space over all calibration points.
* ``EnbPI`` - equal weights over the k nearest calibration residuals,
  tightened over beta like LSCP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, RngSpec, Site
from .errors import AllZeroWeights, LengthMismatch, UntrainedForest
from .models import Predictor
from .qrf import ForestParams, QuantileForest, fit_qrf
from .spatial import SpatialIndex, build_index, knn_batch

__all__ = [
    "METHODS",
    "MethodConfig",
    "ScoreSet",
    "Interval",
    "compute_scores",
    "weighted_quantile",
    "beta_grid",
    "beta_star_search",
    "build_neighbor_features",
    "fit_lscp_forest",
    "lscp_interval",
    "gscp_interval",
    "slscp_interval",
    "lcp_interval",
    "enbpi_interval",
    "ConformalLayer",
    "fit_conformal",
]

METHODS = ("LSCP", "GSCP", "SLSCP", "LCP", "EnbPI")
_TOL = 1e-12


@dataclass(frozen=True)
class MethodConfig:
    method: str
    alpha: float = 0.1
    k: int = 20
    bandwidth: float = 0.1
    beta_steps: int = 20
    forest: ForestParams = field(default_factory=ForestParams)
    scale: str = "none"  # "knn_mad": local MAD scale for GSCP/SLSCP scores
    scale_k: int = 20

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.beta_steps < 2:
            raise ValueError("beta_steps must be >= 2")
        if self.scale not in ("none", "knn_mad"):
            raise ValueError(f"unknown scale model {self.scale!r}")

    def with_(self, **changes) -> "MethodConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Signed calibration residuals ``y - f(x)``.

    ``features`` and ``sites`` optionally keep the calibration rows the
    residuals came from (needed by the feature-kernel method).
    """

    residuals: np.ndarray
    features: np.ndarray | None = None
    sites: np.ndarray | None = None

    def __post_init__(self):
        r = np.array(self.residuals, dtype=float).ravel()
        if not np.isfinite(r).all():
            raise ValueError("scores must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "residuals", r)
        for name in ("features", "sites"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=float, ndmin=2)
                if len(val) != len(r):
                    raise LengthMismatch(f"{len(val)} {name} rows for {len(r)} scores")
                object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.residuals)

    def absolute(self) -> np.ndarray:
        return np.abs(self.residuals)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"lo > hi: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, y) -> bool:
        return self.lo <= y <= self.hi


def compute_scores(model: Predictor, calib: Dataset) -> ScoreSet:
    """Signed residuals of ``model`` on the calibration rows."""
    if len(calib) == 0:
        raise ValueError("empty calibration set")
    return ScoreSet(calib.responses - model.predict(calib.features), calib.features, calib.sites)


def weighted_quantile(values, weights, p: float) -> float:
    """Generalised inverse of the weighted empirical CDF.

    Returns ``min{v in values : sum_i w_i 1{v_i <= v} >= p}`` with weights
    normalised to sum one; ``p = 0`` gives the smallest value carrying
    positive weight.

    >>> weighted_quantile([1, 2, 3, 4, 5], [1, 1, 1, 1, 1], 0.6)
    3.0
    """
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if len(v) != len(w):
        raise LengthMismatch(f"{len(v)} values but {len(w)} weights")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if len(w) == 0 or not w.sum() > 0:
        raise AllZeroWeights("weights sum to zero")
    return float(_rowwise_quantiles(v[None, :], w[None, :], [p])[0, 0])


def _rowwise_quantiles(values, weights, ps) -> np.ndarray:
    # weighted quantiles of each row's own values; shape (m, len(ps))
    order = np.argsort(values, axis=1, kind="stable")
    v = np.take_along_axis(values, order, 1)
    w = np.take_along_axis(weights, order, 1)
    cum = np.cumsum(w, axis=1)
    total = cum[:, -1:]
    out = np.empty((len(values), len(ps)))
    rows = np.arange(len(values))
    first = np.argmax(w > 0, axis=1)
    for q, p in enumerate(ps):
        # leading zero weights can only be hit when the threshold is <= 0
        j = np.minimum((cum < p * total - _TOL * total).sum(axis=1), values.shape[1] - 1)
        out[:, q] = v[rows, np.maximum(j, first)]
    return out


def beta_grid(alpha: float, grid_steps: int) -> np.ndarray:
    return alpha * np.arange(grid_steps + 1) / grid_steps


def _upper_levels(alpha, betas):
    return np.clip(1.0 - alpha + betas, 0.0, 1.0)


def beta_star_search(q: Callable[[float], tuple[float, float]], alpha: float,
                     grid_steps: int = 20) -> tuple[float, float, float]:
    """Tightest ``(1 - alpha)`` interval over the beta grid ``{0, alpha/m, ..., alpha}``.

    ``q(beta)`` returns the quantile pair ``(Q(beta), Q(1 - alpha + beta))``.
    Ties resolve to the smallest beta. Returns ``(beta*, lower, upper)``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if grid_steps < 2:
        raise ValueError("grid_steps must be >= 2")
    best = None
    for beta in beta_grid(alpha, grid_steps):
        lo, hi = q(float(beta))
        if best is None or hi - lo < best[2] - best[1]:
            best = (float(beta), float(lo), float(hi))
    return best


def _tightest(Q, n_beta):
    # Q holds quantiles at [betas..., 1 - alpha + betas...] per row
    widths = Q[:, n_beta:] - Q[:, :n_beta]
    j = np.argmin(widths, axis=1)
    rows = np.arange(len(Q))
    return Q[rows, j], Q[rows, n_beta + j]


def _neighbor_residuals(residuals, index, queries, k, exclude=None):
    # residuals of the k nearest calibration sites, distance ordered; rows
    # short of k neighbours are padded with the mean residual
    idx, _ = knn_batch(index, queries, k, exclude)
    feats = np.full((len(idx), k), float(np.mean(residuals)))
    mask = np.zeros((len(idx), k), dtype=bool)
    feats[:, :idx.shape[1]] = residuals[idx]
    mask[:, :idx.shape[1]] = True
    return feats, mask


def build_neighbor_features(scores: ScoreSet, calib_sites, index: SpatialIndex, k: int,
                            return_mask: bool = False):
    """Regression pairs for the forest.

    For calibration site ``i`` the feature row holds the residuals of its
    ``k`` nearest other calibration sites (closest first) and the target is
    its own residual.
    """
    sites = np.array(calib_sites, dtype=float, ndmin=2)
    r = scores.residuals
    X, mask = _neighbor_residuals(r, index, sites, k, exclude=np.arange(len(sites)))
    return (X, r.copy(), mask) if return_mask else (X, r.copy())


def fit_lscp_forest(scores: ScoreSet, calib_sites, index: SpatialIndex, k: int,
                    params: ForestParams = ForestParams()) -> QuantileForest:
    X, y = build_neighbor_features(scores, calib_sites, index, k)
    return fit_qrf(X, y, params)


def _local_scale(residuals, index, queries, k, exclude=None):
    idx, _ = knn_batch(index, queries, k, exclude)
    r = residuals[idx]
    mad = np.median(np.abs(r - np.median(r, axis=1, keepdims=True)), axis=1)
    floor = 1e-6 * (np.median(np.abs(residuals - np.median(residuals))) + 1e-12)
    return np.maximum(mad, floor)


def _gscp_radius(abs_scores, alpha):
    n = len(abs_scores)
    rank = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    # with fewer than 1/alpha - 1 points the exact level exceeds one; clamp to the max
    rank = min(max(rank, 1), n)
    return float(np.partition(abs_scores, rank - 1)[rank - 1])


def _lcp_radius(abs_scores, calib_features, query_features, alpha, h):
    # test point carries unit kernel weight at +inf, calibration points
    # exp(-|x_i - x|^2 / 2h^2); infinite radii are clamped to the max score
    order = np.argsort(abs_scores, kind="stable")
    vals = np.append(abs_scores[order], np.inf)
    out = np.empty(len(query_features))
    for i in range(0, len(query_features), 1024):
        d2 = cdist(query_features[i:i + 1024], calib_features[order], "sqeuclidean")
        W = np.exp(-d2 / (2.0 * h * h))
        W = np.hstack([W, np.ones((len(W), 1))])
        out[i:i + 1024] = _rowwise_sorted_quantile(W, vals, 1.0 - alpha)
    return np.minimum(out, vals[-2])


def _rowwise_sorted_quantile(W, sorted_vals, p):
    cum = np.cumsum(W, axis=1)
    total = cum[:, -1:]
    j = np.minimum((cum < p * total - _TOL * total).sum(axis=1), W.shape[1] - 1)
    return sorted_vals[j]


def _slscp_radius(abs_scores, index, sites, alpha, k, h):
    idx, d = knn_batch(index, sites, k)
    d2 = d * d
    w = np.exp(-(d2 - d2[:, :1]) / (2.0 * h * h))
    return _rowwise_quantiles(abs_scores[idx], w, [1.0 - alpha])[:, 0]


def _enbpi_offsets(residuals, index, sites, alpha, k, steps):
    idx, _ = knn_batch(index, sites, k)
    vals = residuals[idx]
    betas = beta_grid(alpha, steps)
    ps = np.concatenate([betas, _upper_levels(alpha, betas)])
    Q = _rowwise_quantiles(vals, np.ones_like(vals), ps)
    return _tightest(Q, len(betas))


def _lscp_offsets(forest, x_tilde, alpha, steps):
    betas = beta_grid(alpha, steps)
    ps = np.concatenate([betas, _upper_levels(alpha, betas)])
    Q = forest.quantiles(x_tilde, ps)
    return _tightest(Q, len(betas))


# ---------------------------------------------------------------------------
# single-point constructors


def _point(test_feat, model):
    x = np.asarray(test_feat, dtype=float).ravel()
    return x, float(model.predict(x[None, :])[0])


def _site_row(test_site):
    return np.asarray(test_site.coords if isinstance(test_site, Site) else test_site, dtype=float)[None, :]


def lscp_interval(test_feat, test_site, model: Predictor, scores: ScoreSet, index: SpatialIndex,
                  forest: QuantileForest | None, cfg: MethodConfig) -> Interval:
    """Forest-weighted local interval ``[f + Q(beta*), f + Q(1 - alpha + beta*)]``."""
    if forest is None:
        raise UntrainedForest("LSCP needs a forest fitted on calibration neighbour features")
    _, f = _point(test_feat, model)
    x_tilde, _ = _neighbor_residuals(scores.residuals, index, _site_row(test_site), cfg.k)
    lo, hi = _lscp_offsets(forest, x_tilde, cfg.alpha, cfg.beta_steps)
    return Interval(f + lo[0], f + hi[0])


def gscp_interval(test_feat, model: Predictor, scores: ScoreSet, cfg: MethodConfig) -> Interval:
    """Split-conformal interval ``f +/- q`` with the finite-sample corrected level."""
    _, f = _point(test_feat, model)
    q = _gscp_radius(scores.absolute(), cfg.alpha)
    return Interval(f - q, f + q)


def slscp_interval(test_feat, test_site, model: Predictor, scores: ScoreSet, index: SpatialIndex,
                   cfg: MethodConfig) -> Interval:
    _, f = _point(test_feat, model)
    q = _slscp_radius(scores.absolute(), index, _site_row(test_site), cfg.alpha, cfg.k, cfg.bandwidth)[0]
    return Interval(f - q, f + q)


def lcp_interval(test_feat, model: Predictor, scores: ScoreSet, cfg: MethodConfig,
                 calib_features=None) -> Interval:
    """Feature-kernel weighted interval over all calibration points.

    Calibration features come from ``scores.features`` unless passed
    explicitly as ``calib_features``.
    """
    x, f = _point(test_feat, model)
    if calib_features is None:
        calib_features = scores.features
    if calib_features is None:
        raise ValueError("lcp_interval needs the calibration feature matrix")
    q = _lcp_radius(scores.absolute(), np.atleast_2d(calib_features), x[None, :], cfg.alpha, cfg.bandwidth)[0]
    return Interval(f - q, f + q)


def enbpi_interval(test_feat, test_site, model: Predictor, scores: ScoreSet, index: SpatialIndex,
                   cfg: MethodConfig) -> Interval:
    _, f = _point(test_feat, model)
    lo, hi = _enbpi_offsets(scores.residuals, index, _site_row(test_site), cfg.alpha, cfg.k, cfg.beta_steps)
    return Interval(f + lo[0], f + hi[0])


# ---------------------------------------------------------------------------
# batch layer


class ConformalLayer:
    """Calibrated state for one method; produces intervals for many test rows."""

    def __init__(self, cfg: MethodConfig, calib_sites, calib_features, calib_preds, calib_responses,
                 rng: RngSpec = RngSpec(0)):
        self.cfg = cfg
        self.sites = np.array(calib_sites, dtype=float, ndmin=2)
        self.features = np.array(calib_features, dtype=float, ndmin=2)
        self.scores = ScoreSet(np.asarray(calib_responses, dtype=float) - np.asarray(calib_preds, dtype=float))
        self.index = build_index(self.sites)
        self.forest = None
        self.sigma = None
        r = self.scores.residuals
        if cfg.method == "LSCP":
            params = replace(cfg.forest, rng=rng.child("forest"))
            self.forest = fit_lscp_forest(self.scores, self.sites, self.index, cfg.k, params)
        if cfg.scale == "knn_mad" and cfg.method in ("GSCP", "SLSCP"):
            self.sigma = _local_scale(r, self.index, self.sites, cfg.scale_k, np.arange(len(r)))
            self._abs = np.abs(r) / self.sigma
        else:
            self._abs = np.abs(r)

    def offsets(self, sites, features) -> tuple[np.ndarray, np.ndarray]:
        """Interval offsets ``(lo, hi)`` to add to the point predictions."""
        cfg = self.cfg
        sites = np.array(sites, dtype=float, ndmin=2)
        m = len(sites)
        if cfg.method == "LSCP":
            x_tilde, _ = _neighbor_residuals(self.scores.residuals, self.index, sites, cfg.k)
            return _lscp_offsets(self.forest, x_tilde, cfg.alpha, cfg.beta_steps)
        if cfg.method == "EnbPI":
            return _enbpi_offsets(self.scores.residuals, self.index, sites, cfg.alpha, cfg.k, cfg.beta_steps)
        if cfg.method == "GSCP":
            q = np.full(m, _gscp_radius(self._abs, cfg.alpha))
        elif cfg.method == "SLSCP":
            q = _slscp_radius(self._abs, self.index, sites, cfg.alpha, cfg.k, cfg.bandwidth)
        else:
            feats = np.array(features, dtype=float, ndmin=2)
            q = _lcp_radius(self._abs, self.features, feats, cfg.alpha, cfg.bandwidth)
        if self.sigma is not None:
            q = q * _local_scale(self.scores.residuals, self.index, sites, cfg.scale_k)
        return -q, q

    def intervals(self, sites, features, preds) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets(sites, features)
        preds = np.asarray(preds, dtype=float)
        return preds + lo, preds + hi


def fit_conformal(cfg: MethodConfig, model: Predictor, calib: Dataset, rng: RngSpec = RngSpec(0),
                  preds=None) -> ConformalLayer:
    """Calibrate ``cfg.method`` on ``calib`` using the fixed base ``model``."""
    preds = model.predict(calib.features) if preds is None else preds
    return ConformalLayer(cfg, calib.sites, calib.features, preds, calib.responses, rng)
