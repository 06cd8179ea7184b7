"""Command-line experiment runner.

Subcommands ``synthetic``, ``real``, ``theory-trend`` and ``heatmap``.
Settings come from an optional flat ``key = value`` config file and are
overridden by command-line flags. Exit codes: 0 success, 2 configuration
error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .conformal import METHODS
from .core import Dataset, RngSpec
from .errors import ConfigError, SchemaError, SpatialCPError
from .evaluation import MetricsReport, TrialSettings, coverage_gap_trend, run_trial
from .report import (cell_grid, cell_grid_from_reports, emit_heatmap, read_cells, write_cells,
                     write_summary, write_table)
from .synth import MaternParams, ScenarioSpec, gen_scenario

logger = logging.getLogger("spatialcp")

MODES = ("synthetic", "real", "theory-trend")
EARTH_RADIUS_KM = 6371.0
MIN_REAL_ROWS = 100


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings. Key names match the config file."""

    mode: str = "synthetic"
    scenario: int = 1
    input: str | None = None
    out: str = "results"
    methods: tuple = METHODS
    alpha: float = 0.1
    seed: int = 0
    reps: int = 1
    n: int = 2000
    split: tuple = (0.4, 0.4, 0.2)
    k_grid: tuple = (5, 10, 20, 50, 100)
    h_grid: tuple = (0.01, 0.03, 0.1, 0.3)
    folds: int = 5
    grid_size: int = 10
    n_trees: int = 200
    cv_trees: int = 50
    min_leaf: int = 5
    beta_steps: int = 20
    cv: bool = True
    k: int = 20
    bandwidth: float = 0.1
    n_list: tuple = (500, 2000, 8000)
    features: tuple = ()
    response: str = "value"
    trend_method: str = "LSCP"
    x_variance: float = 1.0
    x_range: float = 0.1
    x_smoothness: float = 0.7
    eps_variance: float = 1.0
    eps_range: float = 0.1
    eps_smoothness: float = 0.7

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.methods:
            raise ConfigError("methods list is empty; name at least one of " + ",".join(METHODS))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.scenario not in (1, 2, 3):
            raise ConfigError(f"scenario must be 1, 2 or 3, got {self.scenario}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if len(self.split) != 3 or any(r < 0 for r in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError(f"split must be three non-negative ratios summing to 1, got {self.split}")
        if not self.k_grid or min(self.k_grid) < 1:
            raise ConfigError(f"k_grid must be non-empty positive integers, got {self.k_grid}")
        if not self.h_grid or min(self.h_grid) <= 0:
            raise ConfigError(f"h_grid must be non-empty positive numbers, got {self.h_grid}")
        for key in ("grid_size", "n_trees", "cv_trees", "min_leaf", "beta_steps", "k"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.mode == "synthetic" and self.n < 20:
            raise ConfigError(f"n must be >= 20 for synthetic scenarios, got {self.n}")
        if self.mode == "real":
            if not self.input:
                raise ConfigError("mode 'real' needs an input CSV (--input PATH or 'input = PATH')")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file not found: {self.input}")
        if self.mode == "theory-trend":
            if len(self.n_list) < 3:
                raise ConfigError(f"n_list needs at least 3 sample sizes, got {self.n_list}")
            if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
                raise ConfigError(f"n_list must be strictly ascending, got {self.n_list}")
            if min(self.n_list) < 20:
                raise ConfigError(f"n_list entries must be >= 20, got {self.n_list}")
            if self.trend_method not in METHODS:
                raise ConfigError(f"unknown trend_method {self.trend_method!r}")
        return self

    def trial_settings(self, box=((0.0, 0.0), (1.0, 1.0)), h_relative: bool = False) -> TrialSettings:
        return TrialSettings(alpha=self.alpha, ratios=tuple(self.split), k_grid=tuple(self.k_grid),
                             h_grid=tuple(self.h_grid), folds=self.folds, grid_size=self.grid_size,
                             box=box, n_trees=self.n_trees, cv_trees=self.cv_trees,
                             min_leaf=self.min_leaf, beta_steps=self.beta_steps, cv=self.cv,
                             k=self.k, bandwidth=self.bandwidth, h_relative=h_relative)

    def output_dir(self) -> Path:
        return Path(self.out) / self.mode


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "tuple":
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if key in ("methods", "features"):
                return tuple(items)
            if key in ("k_grid", "n_list"):
                return tuple(int(s) for s in items)
            return tuple(float(s) for s in items)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "str | None":
            return raw or None
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**values).validate()


# real data -------------------------------------------------------------------

def read_real_csv(path, response: str = "value", extras: Sequence[str] = ()) -> Dataset:
    """Load lon/lat/response rows into a planar dataset.

    Coordinates are projected to kilometres with an equirectangular
    projection about the data centroid. Features are the projected
    coordinates followed by ``extras``. Rows with a missing or non-finite
    value in any used column are dropped and counted in the log.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            rows = [r for r in reader if any(v.strip() for v in r)]
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text ({exc})") from None
    required = ["longitude", "latitude", response]
    columns = required + [c for c in extras if c not in required]
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
    pos = [header.index(c) for c in columns]
    table = np.full((len(rows), len(columns)), np.nan)
    for i, r in enumerate(rows):
        for j, c in enumerate(pos):
            try:
                table[i, j] = float(r[c]) if c < len(r) else np.nan
            except ValueError:
                pass
    non_numeric = [c for j, c in enumerate(columns) if len(rows) and np.isnan(table[:, j]).all()]
    if non_numeric:
        raise SchemaError(f"{path}: non-numeric column(s): {', '.join(non_numeric)}")
    keep = np.isfinite(table).all(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing or non-finite values", path, dropped)
    table = table[keep]
    if len(table) < MIN_REAL_ROWS:
        raise SchemaError(f"{path}: {len(table)} usable rows, need at least {MIN_REAL_ROWS}")
    lon, lat = np.radians(table[:, 0]), np.radians(table[:, 1])
    lon0, lat0 = lon.mean(), lat.mean()
    x = EARTH_RADIUS_KM * math.cos(lat0) * (lon - lon0)
    y = EARTH_RADIUS_KM * (lat - lat0)
    sites = np.column_stack([x, y])
    feats = np.column_stack([sites, table[:, 3:]])
    return Dataset(sites, feats, table[:, 2])


# runners ---------------------------------------------------------------------

def _scenario_spec(cfg: ExperimentConfig, n: int, rng: RngSpec) -> ScenarioSpec:
    return ScenarioSpec(cfg.scenario, n,
                        MaternParams(cfg.x_variance, cfg.x_range, cfg.x_smoothness),
                        MaternParams(cfg.eps_variance, cfg.eps_range, cfg.eps_smoothness), rng)


def _write_reports(cfg: ExperimentConfig, reports: list[MetricsReport]) -> Path:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "summary.csv", reports, cfg.alpha)
    write_table(out / "table.csv", reports, cfg.methods)
    for m in cfg.methods:
        mine = [r for r in reports if r.method == m]
        write_cells(out / f"cells_{m}.csv", mine)
        emit_heatmap(cell_grid_from_reports(mine, cfg.grid_size), out / f"heatmap_{m}.svg",
                     title=f"{m} mean interval width")
    for m in cfg.methods:
        mine = [r for r in reports if r.method == m]
        logger.info("%s: coverage %.4f, width %.4f over %d seed(s)", m,
                    np.mean([r.coverage for r in mine]), np.mean([r.mean_width for r in mine]), len(mine))
    return out


def run_synthetic(cfg: ExperimentConfig) -> Path:
    settings = cfg.trial_settings()
    reports = []
    for seed in range(cfg.seed, cfg.seed + cfg.reps):
        logger.info("[synthetic scenario=%d seed=%d] generating n=%d", cfg.scenario, seed, cfg.n)
        data = gen_scenario(_scenario_spec(cfg, cfg.n, RngSpec(seed).child("scenario")))
        reports.extend(run_trial(data, cfg.methods, settings, seed))
    return _write_reports(cfg, reports)


def run_real(cfg: ExperimentConfig) -> Path:
    data = read_real_csv(cfg.input, cfg.response, cfg.features)
    logger.info("[real] %d rows from %s", len(data), cfg.input)
    settings = cfg.trial_settings(box=None, h_relative=True)
    reports = []
    for seed in range(cfg.seed, cfg.seed + cfg.reps):
        logger.info("[real seed=%d] running %s", seed, ",".join(cfg.methods))
        reports.extend(run_trial(data, cfg.methods, settings, seed))
    return _write_reports(cfg, reports)


def run_theory_trend(cfg: ExperimentConfig) -> Path:
    template = _scenario_spec(cfg, cfg.n_list[0], RngSpec(cfg.seed))
    settings = replace(cfg.trial_settings(), cv=False)
    res = coverage_gap_trend(template, cfg.n_list, cfg.reps, cfg.alpha, RngSpec(cfg.seed),
                             cfg.trend_method, settings)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    with (out / "trend.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n", "reps", "mean_coverage", "mean_abs_gap", "gap_se"))
        for i, n in enumerate(res.n_list):
            w.writerow([n, cfg.reps, f"{res.coverages[i].mean():.6f}", f"{res.gaps[i]:.6f}",
                        f"{res.gap_se[i]:.6f}"])
    (out / "trend_stat.txt").write_text(
        f"method = {cfg.trend_method}\nalpha = {cfg.alpha:g}\nspearman_rho = {res.rho:.6f}\n", encoding="utf-8")
    logger.info("[theory-trend] spearman rho = %.4f", res.rho)
    return out


def run_heatmap(cells_csv, out_path, grid_size: int, value: str = "mean_width") -> Path:
    try:
        rows = read_cells(cells_csv)
        grid = cell_grid(rows, grid_size, value)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{cells_csv}: not a cells CSV ({exc})") from None
    except IndexError:
        raise SchemaError(f"{cells_csv}: cell index exceeds grid size {grid_size}") from None
    return emit_heatmap(grid, out_path, title=f"{Path(cells_csv).stem} {value}")


RUNNERS = {"synthetic": run_synthetic, "real": run_real, "theory-trend": run_theory_trend}


# argument parsing ------------------------------------------------------------

def _csv_list(kind):
    def conv(s: str):
        return tuple(kind(x.strip()) for x in s.split(",") if x.strip())
    return conv


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spatialcp", description="Spatial conformal prediction experiments.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--methods", type=_csv_list(str), help="comma-separated, e.g. LSCP,GSCP")
        p.add_argument("--reps", type=int, help="number of seeds (trend: repetitions per n)")
        p.add_argument("--n", type=int)
        p.add_argument("--scenario", type=int, choices=(1, 2, 3))
        p.add_argument("--input", help="real-data CSV")
        p.add_argument("--n-list", dest="n_list", type=_csv_list(int))
        p.add_argument("--no-cv", dest="cv", action="store_const", const=False)
    h = sub.add_parser("heatmap", help="render an SVG heatmap from a cells_<method>.csv")
    h.add_argument("--input", required=True)
    h.add_argument("--out", required=True, help="output SVG path")
    h.add_argument("--grid-size", type=int, default=10)
    h.add_argument("--value", choices=("mean_width", "coverage", "count"), default="mean_width")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "heatmap":
            path = run_heatmap(args.input, args.out, args.grid_size, args.value)
        else:
            overrides = {k: getattr(args, k) for k in
                         ("out", "seed", "alpha", "methods", "reps", "n", "scenario", "input", "n_list", "cv")}
            overrides["mode"] = args.command
            try:
                cfg = load_config(args.config, overrides)
            except TypeError as exc:
                raise ConfigError(str(exc)) from None
            path = RUNNERS[cfg.mode](cfg)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return 2
    except FileNotFoundError as exc:
        logger.error("config error: %s", exc)
        return 2
    except (SchemaError, SpatialCPError) as exc:
        logger.error("data error: %s", exc)
        return 3
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
