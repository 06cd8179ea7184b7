"""Coverage/width metrics, conformal hyperparameter CV and experiment drivers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .conformal import Interval, MethodConfig, fit_conformal
from .core import Dataset, RngSpec, kfold_indices, split_dataset
from .errors import LengthMismatch, TooFewPoints
from .models import Predictor, fit_kernel_regression
from .qrf import ForestParams
from .spatial import grid_bin
from .synth import ScenarioSpec, gen_scenario

logger = logging.getLogger(__name__)

__all__ = [
    "CellStat",
    "MetricsReport",
    "CvResult",
    "TrialSettings",
    "TrendResult",
    "evaluate",
    "candidate_grid",
    "cv_select",
    "run_trial",
    "coverage_gap_trend",
]


@dataclass(frozen=True)
class CellStat:
    cell: tuple
    count: int
    coverage: float
    mean_width: float


@dataclass(frozen=True, eq=False)
class MetricsReport:
    method: str
    coverage: float
    mean_width: float
    cells: tuple
    seed: int = 0
    n: int = 0
    covered: np.ndarray | None = None
    widths: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def test_count(self) -> int:
        return 0 if self.covered is None else len(self.covered)


def _as_bounds(intervals):
    if isinstance(intervals, tuple) and len(intervals) == 2 and not isinstance(intervals[0], Interval):
        lo, hi = (np.asarray(a, dtype=float).ravel() for a in intervals)
    else:
        lo = np.array([iv.lo for iv in intervals], dtype=float)
        hi = np.array([iv.hi for iv in intervals], dtype=float)
    return lo, hi


def evaluate(intervals, truths, sites, G: int = 10, box=None, method: str = "",
             seed: int = 0, n: int = 0, params: dict | None = None) -> MetricsReport:
    """Marginal and per-grid-cell coverage and width.

    ``intervals`` is a list of :class:`Interval` or a ``(lo, hi)`` pair of
    arrays. Cells without test points are omitted.
    """
    lo, hi = _as_bounds(intervals)
    y = np.asarray(truths, dtype=float).ravel()
    pts = np.array(sites, dtype=float, ndmin=2)
    if not (len(lo) == len(y) == len(pts)):
        raise LengthMismatch(f"{len(lo)} intervals, {len(y)} truths, {len(pts)} sites")
    covered = (lo <= y) & (y <= hi)
    widths = hi - lo
    binning = grid_bin(pts, G, box)
    flat = binning.flat
    cells = []
    d = pts.shape[1]
    for c in np.unique(flat):
        sel = flat == c
        cells.append(CellStat(tuple(int(i) for i in np.unravel_index(c, (G,) * d)), int(sel.sum()),
                              float(covered[sel].mean()), float(widths[sel].mean())))
    return MetricsReport(method, float(covered.sum() / len(y)), float(widths.mean()), tuple(cells),
                         seed, n, covered, widths, dict(params or {}))


@dataclass(frozen=True)
class CvResult:
    candidates: tuple  # of dicts
    fold_coverage: np.ndarray  # (n_candidates, folds)
    fold_width: np.ndarray
    selected: dict

    @property
    def mean_coverage(self) -> np.ndarray:
        return self.fold_coverage.mean(axis=1)

    @property
    def mean_width(self) -> np.ndarray:
        return self.fold_width.mean(axis=1)


def candidate_grid(method: str, ks=(5, 10, 20, 50, 100), hs=(0.01, 0.03, 0.1, 0.3)) -> list[dict]:
    """Hyperparameters searched for each method."""
    if method in ("LSCP", "EnbPI"):
        return [{"k": int(k)} for k in ks]
    if method == "SLSCP":
        return [{"k": int(k), "bandwidth": float(h)} for k in ks for h in hs]
    if method == "LCP":
        return [{"bandwidth": float(h)} for h in hs]
    return [{}]


def _canon(cand: dict) -> tuple:
    return tuple(sorted(cand.items()))


def cv_select(calib: Dataset, model: Predictor, template: MethodConfig, grid: Sequence[dict],
              folds: int = 5, rng: RngSpec = RngSpec(0), preds=None,
              forest: ForestParams | None = None) -> CvResult:
    """Choose conformal hyperparameters by k-fold CV inside the calibration set.

    The base model stays fixed; for each fold the conformal layer is refit
    on the remaining calibration rows and scored on the held-out rows.
    Selection: narrowest mean width among candidates whose mean fold
    coverage is at least ``1 - alpha - 0.01``; if none qualifies, highest
    coverage. Ties break on the sorted candidate parameters, so the result
    does not depend on grid order.
    """
    grid = sorted((dict(c) for c in grid), key=_canon)
    if not grid:
        raise ValueError("empty candidate grid")
    preds = model.predict(calib.features) if preds is None else np.asarray(preds)
    splits = kfold_indices(np.arange(len(calib)), folds, rng.child("folds"))
    base = template if forest is None else template.with_(forest=forest)
    cov = np.zeros((len(grid), folds))
    wid = np.zeros((len(grid), folds))
    if len(grid) > 1:
        for j, (fit_idx, hold_idx) in enumerate(splits):
            fit_rows, hold = calib.subset(fit_idx), calib.subset(hold_idx)
            for c, cand in enumerate(grid):
                cfg = base.with_(**cand)
                layer = fit_conformal(cfg, model, fit_rows, rng.child("fold", j), preds=preds[fit_idx])
                lo, hi = layer.intervals(hold.sites, hold.features, preds[hold_idx])
                cov[c, j] = np.mean((lo <= hold.responses) & (hold.responses <= hi))
                wid[c, j] = np.mean(hi - lo)
    mc, mw = cov.mean(axis=1), wid.mean(axis=1)
    valid = [c for c in range(len(grid)) if mc[c] >= 1 - template.alpha - 0.01]
    if valid:
        best = min(valid, key=lambda c: (mw[c], _canon(grid[c])))
    else:
        best = min(range(len(grid)), key=lambda c: (-mc[c], mw[c], _canon(grid[c])))
    return CvResult(tuple(grid), cov, wid, grid[best])


@dataclass(frozen=True)
class TrialSettings:
    """Everything one (dataset, seed) run needs besides the data."""

    alpha: float = 0.1
    ratios: tuple = (0.4, 0.4, 0.2)
    k_grid: tuple = (5, 10, 20, 50, 100)
    h_grid: tuple = (0.01, 0.03, 0.1, 0.3)
    folds: int = 5
    grid_size: int = 10
    box: tuple | None = ((0.0, 0.0), (1.0, 1.0))
    n_trees: int = 200
    cv_trees: int = 50
    min_leaf: int = 5
    beta_steps: int = 20
    cv: bool = True
    k: int = 20  # used when cv is off
    bandwidth: float = 0.1
    h_relative: bool = False
    model_bandwidth: float | None = None


def _scaled_h_grid(settings: TrialSettings, method: str, data: Dataset) -> tuple:
    if not settings.h_relative:
        return tuple(settings.h_grid)
    if method == "LCP":
        scale = float(np.sqrt(np.var(data.features, axis=0).sum()))
    else:
        ext = data.sites.max(axis=0) - data.sites.min(axis=0)
        scale = float(np.linalg.norm(ext))
    return tuple(h * (scale or 1.0) for h in settings.h_grid)


def run_trial(data: Dataset, methods: Sequence[str], settings: TrialSettings, seed: int,
              rng: RngSpec | None = None) -> list[MetricsReport]:
    """Split, fit the base model, tune and calibrate each method, score the test split."""
    rng = RngSpec(seed) if rng is None else rng
    split = split_dataset(data, settings.ratios, rng.child("split"))
    train, calib, test = split.train, split.calib, split.test
    model = fit_kernel_regression(train, settings.model_bandwidth, rng=rng.child("model"))
    p_cal = model.predict(calib.features)
    p_test = model.predict(test.features)
    box = settings.box
    if box is None:
        box = (data.sites.min(axis=0), data.sites.max(axis=0))
    reports = []
    for method in methods:
        forest = ForestParams(n_trees=settings.n_trees, min_leaf=settings.min_leaf)
        template = MethodConfig(method, settings.alpha, k=settings.k, bandwidth=settings.bandwidth,
                                beta_steps=settings.beta_steps, forest=forest)
        if settings.cv:
            h_grid = _scaled_h_grid(settings, method, data)
            k_grid = tuple(k for k in settings.k_grid if k < len(calib)) or (min(settings.k_grid),)
            cv = cv_select(calib, model, template, candidate_grid(method, k_grid, h_grid),
                           settings.folds, rng.child("cv", method), preds=p_cal,
                           forest=replace(forest, n_trees=settings.cv_trees))
            chosen = cv.selected
        else:
            chosen = {"k": settings.k} if method in ("LSCP", "EnbPI") else {}
            if method in ("SLSCP", "LCP"):
                chosen = {"k": settings.k, "bandwidth": settings.bandwidth}
        cfg = template.with_(**chosen)
        layer = fit_conformal(cfg, model, calib, rng.child("conformal", method), preds=p_cal)
        lo, hi = layer.intervals(test.sites, test.features, p_test)
        rep = evaluate((lo, hi), test.responses, test.sites, settings.grid_size, box,
                       method, seed, len(data), chosen)
        logger.debug("seed %s %s %s coverage %.3f width %.3f", seed, method, chosen, rep.coverage, rep.mean_width)
        reports.append(rep)
    return reports


@dataclass(frozen=True)
class TrendResult:
    n_list: tuple
    coverages: np.ndarray  # (len(n_list), reps)
    gaps: np.ndarray  # mean |coverage - (1 - alpha)| per n
    gap_se: np.ndarray
    rho: float
    alpha: float


def coverage_gap_trend(template: ScenarioSpec, n_list: Sequence[int], reps: int, alpha: float = 0.1,
                       rng: RngSpec = RngSpec(0), method: str = "LSCP",
                       settings: TrialSettings | None = None) -> TrendResult:
    """Mean absolute marginal-coverage gap of ``method`` as the sample size grows.

    Each repetition draws a fresh scenario dataset and runs the full
    split/fit/calibrate/evaluate pipeline. The trend statistic is the
    Spearman correlation between the gap and ``n``.
    """
    n_list = tuple(int(n) for n in n_list)
    if len(n_list) < 3:
        raise TooFewPoints(f"need at least 3 sample sizes, got {len(n_list)}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"n_list must be strictly ascending, got {n_list}")
    if reps < 1:
        raise TooFewPoints("reps must be >= 1")
    if reps < 10:
        logger.warning("only %d repetitions per sample size; the trend will be noisy", reps)
    settings = replace(settings or TrialSettings(cv=False), alpha=alpha)
    cov = np.zeros((len(n_list), reps))
    for i, n in enumerate(n_list):
        for r in range(reps):
            stream = rng.child("trend", n, r)
            data = gen_scenario(replace(template, n=n, rng=stream.child("scenario")))
            rep = run_trial(data, [method], settings, seed=r, rng=stream)[0]
            cov[i, r] = rep.coverage
            logger.info("trend n=%d rep=%d coverage=%.4f", n, r, rep.coverage)
    gap = np.abs(cov - (1 - alpha))
    gaps = gap.mean(axis=1)
    se = gap.std(axis=1, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(len(n_list), np.nan)
    rho = float(spearmanr(gaps, n_list)[0])
    return TrendResult(n_list, cov, gaps, se, rho, alpha)
