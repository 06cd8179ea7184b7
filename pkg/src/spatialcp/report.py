"""CSV tables and SVG heatmaps written by the experiment runners."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import MetricsReport

SUMMARY_HEADER = ("method", "seed", "n", "alpha", "coverage", "mean_width")
CELLS_HEADER = ("method", "seed", "cell_x", "cell_y", "count", "coverage", "mean_width")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_summary(path, reports: Iterable[MetricsReport], alpha: float) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in reports:
            w.writerow([r.method, r.seed, r.n, f"{alpha:g}", _fmt(r.coverage), _fmt(r.mean_width)])
    return path


def write_cells(path, reports: Iterable[MetricsReport]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELLS_HEADER)
        for r in reports:
            for c in r.cells:
                w.writerow([r.method, r.seed, c.cell[0], c.cell[1], c.count, _fmt(c.coverage), _fmt(c.mean_width)])
    return path


def write_table(path, reports: Sequence[MetricsReport], methods: Sequence[str]) -> Path:
    """Seed-averaged coverage (percent) and width per method."""
    path = Path(path)
    by = defaultdict(list)
    for r in reports:
        by[r.method].append(r)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "coverage_pct", "width", "seeds"))
        for m in methods:
            rs = by.get(m, [])
            if not rs:
                continue
            w.writerow([m, f"{100 * np.mean([r.coverage for r in rs]):.1f}",
                        f"{np.mean([r.mean_width for r in rs]):.3f}", len(rs)])
    return path


def read_cells(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cell_grid(rows: Iterable[dict], G: int, value: str = "mean_width") -> np.ndarray:
    """Seed-averaged per-cell values as a (G, G) display grid.

    Row 0 is the top (largest y cell); empty cells are NaN.
    """
    acc = defaultdict(list)
    for row in rows:
        acc[(int(row["cell_x"]), int(row["cell_y"]))].append(float(row[value]))
    grid = np.full((G, G), np.nan)
    for (i, j), vals in acc.items():
        grid[G - 1 - j, i] = float(np.mean(vals))
    return grid


def cell_grid_from_reports(reports: Iterable[MetricsReport], G: int, value: str = "mean_width") -> np.ndarray:
    rows = [{"cell_x": c.cell[0], "cell_y": c.cell[1], value: getattr(c, value)} for r in reports for c in r.cells]
    return cell_grid(rows, G, value)


_LOW = (224, 224, 224)
_HIGH = (178, 24, 43)


def _ramp(t: float) -> str:
    rgb = (round(a + (b - a) * t) for a, b in zip(_LOW, _HIGH))
    return "#%02x%02x%02x" % tuple(rgb)


def emit_heatmap(values, path, title: str = "", cell_px: int = 32) -> Path:
    """Write a self-contained SVG heatmap of a rectangular grid.

    Colours run linearly from light grey at the minimum to red at the
    maximum; NaN marks an empty cell and is drawn white. The legend shows
    the numeric min and max.
    """
    v = np.array(values, dtype=float, ndmin=2)
    if v.ndim != 2:
        raise ValueError("heatmap values must form a 2-D grid")
    if np.isinf(v).any():
        raise ValueError("heatmap values must be finite (NaN marks empty cells)")
    finite = v[~np.isnan(v)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 0.0
    span = vmax - vmin
    rows, cols = v.shape
    top = 28 if title else 8
    width = cols * cell_px + 16
    legend_y = top + rows * cell_px + 10
    height = legend_y + 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="8" y="18">{_escape(title)}</text>')
    for r in range(rows):
        for c in range(cols):
            val = v[r, c]
            if math.isnan(val):
                fill = "#ffffff"
            else:
                fill = _ramp((val - vmin) / span if span > 0 else 0.0)
            out.append(f'<rect x="{8 + c * cell_px}" y="{top + r * cell_px}" width="{cell_px}" '
                       f'height="{cell_px}" fill="{fill}" stroke="#999999" stroke-width="0.5"/>')
    bar_w = cols * cell_px
    out.append('<defs><linearGradient id="ramp" x1="0" x2="1" y1="0" y2="0">'
               f'<stop offset="0" stop-color="{_ramp(0.0)}"/><stop offset="1" stop-color="{_ramp(1.0)}"/>'
               '</linearGradient></defs>')
    out.append(f'<rect x="8" y="{legend_y}" width="{bar_w}" height="10" fill="url(#ramp)" stroke="#999999" stroke-width="0.5"/>')
    out.append(f'<text x="8" y="{legend_y + 24}" class="legend-min">min {vmin:.4g}</text>')
    out.append(f'<text x="{8 + bar_w}" y="{legend_y + 24}" text-anchor="end" class="legend-max">max {vmax:.4g}</text>')
    out.append("</svg>\n")
    path = Path(path)
    path.write_text("\n".join(out), encoding="utf-8")
    return path


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
