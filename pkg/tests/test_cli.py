import logging
from pathlib import Path

import numpy as np
import pytest

from spatialcp.cli import ExperimentConfig, load_config, main, parse_config_text, read_real_csv
from spatialcp.errors import ConfigError, SchemaError

DEMO = Path(__file__).resolve().parents[1] / "src" / "spatialcp" / "data" / "demo_signal.csv"


def _write_csv(path, header, rows):
    path.write_text(header + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    return path


class TestConfig:
    def test_parse(self):
        vals = parse_config_text("# comment\nmode = real\nmethods = LSCP, GSCP\nalpha=0.05 # inline\n"
                                 "k_grid = 5,10\ncv = false\n")
        assert vals == {"mode": "real", "methods": ("LSCP", "GSCP"), "alpha": 0.05, "k_grid": (5, 10),
                        "cv": False}

    @pytest.mark.parametrize("text", ["bogus = 1", "alpha", "alpha = x", "cv = maybe"])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("alpha = 0.2\nseed = 3\n")
        cfg = load_config(p, {"alpha": 0.05, "seed": None})
        assert cfg.alpha == 0.05 and cfg.seed == 3

    @pytest.mark.parametrize("kw", [{"methods": ()}, {"alpha": 1.0}, {"methods": ("FOO",)},
                                    {"mode": "theory-trend", "n_list": (8000, 2000, 500)},
                                    {"mode": "real"}, {"mode": "real", "input": "/no/such.csv"},
                                    {"split": (0.5, 0.5, 0.5)}, {"scenario": 4}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw).validate()

    def test_missing_config_file(self):
        with pytest.raises(ConfigError):
            load_config("/no/such.cfg")


class TestRealCsv:
    def test_demo_file(self):
        data = read_real_csv(DEMO)
        assert len(data) == 500 and data.features.shape == (500, 2)
        # projected about the centroid, in km
        np.testing.assert_allclose(data.sites.mean(axis=0), 0.0, atol=1e-6)
        assert 400 < np.ptp(data.sites[:, 0]) < 700

    def test_projection_formula(self, tmp_path):
        rows = [(-106.0 + 0.01 * (i % 10), 34.0 + 0.01 * (i // 10), i) for i in range(100)]
        data = read_real_csv(_write_csv(tmp_path / "d.csv", "longitude,latitude,value", rows))
        lat0 = np.radians(np.mean([r[1] for r in rows]))
        lon0 = np.radians(np.mean([r[0] for r in rows]))
        x = 6371.0 * np.cos(lat0) * (np.radians(rows[0][0]) - lon0)
        y = 6371.0 * (np.radians(rows[0][1]) - lat0)
        np.testing.assert_allclose(data.sites[0], [x, y], rtol=1e-12)

    def test_missing_latitude(self, tmp_path):
        p = _write_csv(tmp_path / "d.csv", "longitude,value", [(1, 2)] * 120)
        with pytest.raises(SchemaError, match="latitude"):
            read_real_csv(p)

    def test_non_numeric_column(self, tmp_path):
        p = _write_csv(tmp_path / "d.csv", "longitude,latitude,value", [(1, 2, "fast")] * 120)
        with pytest.raises(SchemaError, match="value"):
            read_real_csv(p)

    def test_drops_bad_rows_and_logs(self, tmp_path, caplog):
        rows = [(-106 + i * 0.001, 34, i) for i in range(110)] + [(-106, 34, "nan"), (-106, "", 3), (1, 2, "x")]
        p = _write_csv(tmp_path / "d.csv", "longitude,latitude,value", rows)
        with caplog.at_level(logging.WARNING):
            data = read_real_csv(p)
        assert len(data) == 110 and "dropped 3" in caplog.text

    def test_too_few_rows(self, tmp_path):
        p = _write_csv(tmp_path / "d.csv", "longitude,latitude,value", [(1, 2, 3)] * 99)
        with pytest.raises(SchemaError):
            read_real_csv(p)

    def test_extra_feature_columns(self, tmp_path):
        rows = [(-106 + i * 0.01, 34, i, 2 * i) for i in range(120)]
        p = _write_csv(tmp_path / "d.csv", "longitude,latitude,value,elev", rows)
        data = read_real_csv(p, extras=["elev"])
        assert data.features.shape == (120, 3)
        assert data.features[5, 2] == 10.0

    def test_duplicate_coordinates_accepted(self, tmp_path):
        rows = [(-106 + (i % 30) * 0.01, 34 + (i % 7) * 0.01, i % 13) for i in range(150)]
        data = read_real_csv(_write_csv(tmp_path / "d.csv", "longitude,latitude,value", rows))
        assert len(data) == 150


class TestMain:
    def test_synthetic_gscp(self, tmp_path):
        assert main(["synthetic", "--scenario", "1", "--methods", "GSCP", "--n", "1000",
                     "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "synthetic" / "summary.csv").read_text().splitlines()
        assert lines[0] == "method,seed,n,alpha,coverage,mean_width" and len(lines) == 2
        cov = float(lines[1].split(",")[4])
        assert 0.85 <= cov <= 0.95
        for name in ("cells_GSCP.csv", "heatmap_GSCP.svg", "table.csv"):
            assert (tmp_path / "synthetic" / name).is_file()

    def test_rerun_byte_identical(self, tmp_path):
        args = ["synthetic", "--methods", "EnbPI,GSCP", "--n", "300", "--reps", "2"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("summary.csv", "cells_EnbPI.csv", "cells_GSCP.csv", "heatmap_EnbPI.svg"):
            assert (tmp_path / "a/synthetic" / name).read_bytes() == (tmp_path / "b/synthetic" / name).read_bytes()

    def test_empty_methods_exit_2(self, tmp_path):
        assert main(["synthetic", "--methods", "", "--out", str(tmp_path)]) == 2

    def test_descending_n_list_exit_2(self, tmp_path):
        assert main(["theory-trend", "--n-list", "800,400,200", "--out", str(tmp_path)]) == 2

    def test_schema_error_exit_3(self, tmp_path):
        p = _write_csv(tmp_path / "d.csv", "longitude,value", [(1, 2)] * 120)
        assert main(["real", "--input", str(p), "--out", str(tmp_path)]) == 3

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"methods = GSCP\nn = 200\nout = {tmp_path / 'o'}\nseed = 7\n")
        assert main(["synthetic", "--config", str(cfg)]) == 0
        assert (tmp_path / "o/synthetic/summary.csv").read_text().splitlines()[1].startswith("GSCP,7,200,")

    def test_real_demo(self, tmp_path):
        assert main(["real", "--input", str(DEMO), "--methods", "GSCP,EnbPI", "--out", str(tmp_path)]) == 0
        assert len((tmp_path / "real/summary.csv").read_text().splitlines()) == 3

    def test_theory_trend_reps_one_warns(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            rc = main(["theory-trend", "--n-list", "60,90,120", "--reps", "1", "--out", str(tmp_path)])
        assert rc == 0 and "repetitions" in caplog.text
        lines = (tmp_path / "theory-trend/trend.csv").read_text().splitlines()
        assert len(lines) == 4
        assert "spearman_rho" in (tmp_path / "theory-trend/trend_stat.txt").read_text()

    def test_heatmap_subcommand(self, tmp_path):
        main(["synthetic", "--methods", "GSCP", "--n", "200", "--out", str(tmp_path)])
        out = tmp_path / "h.svg"
        assert main(["heatmap", "--input", str(tmp_path / "synthetic/cells_GSCP.csv"), "--out", str(out)]) == 0
        assert out.read_text().startswith("<svg")
