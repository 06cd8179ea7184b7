"""Localized spatial conformal prediction.

Prediction intervals for spatially indexed data whose width adapts to the
local residual distribution, plus the global and kernel-weighted baselines
they are compared against, synthetic Matérn-field scenarios and an
evaluation harness.
"""
from ._backend import BACKEND
from .conformal import (METHODS, ConformalLayer, Interval, MethodConfig, ScoreSet, beta_star_search,
                        compute_scores, enbpi_interval, fit_conformal, gscp_interval, lcp_interval,
                        lscp_interval, slscp_interval, weighted_quantile)
from .core import Dataset, Observation, RngSpec, Site, SplitDataset, kfold_indices, split_dataset
from .evaluation import MetricsReport, TrialSettings, coverage_gap_trend, cv_select, evaluate, run_trial
from .models import KernelRegressor, Predictor, fit_kernel_regression, predict
from .qrf import ForestParams, QuantileForest, fit_qrf, qrf_quantile, qrf_weights
from .spatial import build_index, grid_bin, knn, knn_batch
from .synth import MaternParams, ScenarioSpec, bessel_k, gen_scenario, matern_cov, sample_gp

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "METHODS", "ConformalLayer", "Interval", "MethodConfig", "ScoreSet",
    "beta_star_search", "compute_scores", "enbpi_interval", "fit_conformal", "gscp_interval",
    "lcp_interval", "lscp_interval", "slscp_interval", "weighted_quantile", "Dataset",
    "Observation", "RngSpec", "Site", "SplitDataset", "kfold_indices", "split_dataset",
    "MetricsReport", "TrialSettings", "coverage_gap_trend", "cv_select", "evaluate", "run_trial",
    "KernelRegressor", "Predictor", "fit_kernel_regression", "predict", "ForestParams",
    "QuantileForest", "fit_qrf", "qrf_quantile", "qrf_weights", "build_index", "grid_bin", "knn",
    "knn_batch", "MaternParams", "ScenarioSpec", "bessel_k", "gen_scenario", "matern_cov",
    "sample_gp",
]
