import re

import numpy as np
import pytest

from spatialcp.evaluation import CellStat, MetricsReport
from spatialcp.report import cell_grid, emit_heatmap, write_cells, write_summary, write_table


def _fills(svg):
    return re.findall(r'<rect x="\d+" y="\d+" width="32" height="32" fill="(#[0-9a-f]{6})"', svg)


class TestHeatmap:
    def test_constant_grid(self, tmp_path):
        svg = emit_heatmap(np.full((3, 3), 2.5), tmp_path / "h.svg").read_text()
        assert len(set(_fills(svg))) == 1 and len(_fills(svg)) == 9
        assert "min 2.5<" in svg and "max 2.5<" in svg

    def test_checkerboard(self, tmp_path):
        svg = emit_heatmap([[0, 1], [1, 0]], tmp_path / "h.svg").read_text()
        f = _fills(svg)
        assert len(set(f)) == 2
        assert f[0] == f[3] and f[1] == f[2] and f[0] != f[1]

    def test_byte_identical(self, tmp_path):
        v = np.random.default_rng(0).uniform(size=(10, 10))
        a = emit_heatmap(v, tmp_path / "a.svg").read_bytes()
        b = emit_heatmap(v, tmp_path / "b.svg").read_bytes()
        assert a == b

    def test_self_contained(self, tmp_path):
        svg = emit_heatmap(np.eye(4), tmp_path / "h.svg", title="a<b").read_text()
        assert svg.startswith("<svg") and "href" not in svg and "a&lt;b" in svg

    def test_nan_cells_white(self, tmp_path):
        svg = emit_heatmap([[np.nan, 1.0], [2.0, 3.0]], tmp_path / "h.svg").read_text()
        assert _fills(svg)[0] == "#ffffff"
        assert "min 1<" in svg

    def test_rejects_inf(self, tmp_path):
        with pytest.raises(ValueError):
            emit_heatmap([[np.inf]], tmp_path / "h.svg")


def _reports():
    cells = (CellStat((0, 0), 3, 2 / 3, 1.5), CellStat((1, 0), 1, 1.0, 2.0))
    return [MetricsReport("LSCP", 0.75, 1.625, cells, seed=4, n=20),
            MetricsReport("GSCP", 0.8, 2.0, cells[:1], seed=4, n=20)]


class TestCsv:
    def test_summary_header_and_rows(self, tmp_path):
        text = write_summary(tmp_path / "s.csv", _reports(), 0.1).read_text()
        assert text.splitlines() == ["method,seed,n,alpha,coverage,mean_width",
                                     "LSCP,4,20,0.1,0.750000,1.625000",
                                     "GSCP,4,20,0.1,0.800000,2.000000"]

    def test_cells(self, tmp_path):
        lines = write_cells(tmp_path / "c.csv", _reports()[:1]).read_text().splitlines()
        assert lines[0] == "method,seed,cell_x,cell_y,count,coverage,mean_width"
        assert lines[1] == "LSCP,4,0,0,3,0.666667,1.500000"

    def test_table_averages(self, tmp_path):
        reps = _reports() + [MetricsReport("LSCP", 0.85, 1.375, (), seed=5, n=20)]
        lines = write_table(tmp_path / "t.csv", reps, ["LSCP", "GSCP"]).read_text().splitlines()
        assert lines[1] == "LSCP,80.0,1.500,2"

    def test_cell_grid_orientation(self):
        rows = [{"cell_x": 0, "cell_y": 0, "mean_width": 1.0}, {"cell_x": 1, "cell_y": 1, "mean_width": 3.0},
                {"cell_x": 1, "cell_y": 1, "mean_width": 5.0}]
        g = cell_grid(rows, 2)
        assert g[1, 0] == 1.0 and g[0, 1] == 4.0  # y grows upward
        assert np.isnan(g[0, 0]) and np.isnan(g[1, 1])
