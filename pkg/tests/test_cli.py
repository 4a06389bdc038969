"""Command-line surface: artifacts, determinism, exit codes, plots."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from condshap.cli import main
from condshap.data import Dataset, write_csv
from condshap.models import LinearPredictor, save_model


@pytest.fixture()
def workspace(tmp_path):
    rng = np.random.default_rng(12)
    m = 4
    cov = 0.5 * np.ones((m, m)) + 0.5 * np.eye(m)
    X = rng.multivariate_normal(np.zeros(m), cov, size=100)
    write_csv(Dataset.from_matrix(X), tmp_path / "train.csv")
    write_csv(Dataset.from_matrix(X[:3].copy()), tmp_path / "explain.csv")
    save_model(LinearPredictor(1.0, {"x1": 2.0, "x2": -1.0, "x3": 0.5, "x4": 1.5}),
               tmp_path / "model.json")
    config = {
        "train": str(tmp_path / "train.csv"),
        "explain": str(tmp_path / "explain.csv"),
        "model": str(tmp_path / "model.json"),
        "approach": "gaussian",
        "seed": 3,
        "n_mc_samples": 40,
        "n_boot": 10,
        "iterative": False,
    }
    (tmp_path / "config.yaml").write_text(yaml.safe_dump(config))
    return tmp_path


def _run(*args):
    return CliRunner().invoke(main, list(args))


class TestExplainCommand:
    def test_artifacts_written(self, workspace):
        out = workspace / "out"
        res = _run("explain", "--config", str(workspace / "config.yaml"),
                   "--output-dir", str(out))
        assert res.exit_code == 0, res.output
        for name in ["shapley_values_est.csv", "shapley_values_sd.csv",
                     "pred_explain.csv", "explain_data.csv", "msev.json",
                     "convergence_trace.json", "timing.json", "state.json",
                     "effective_config.json"]:
            assert (out / name).exists(), name
        with open(out / "shapley_values_est.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["none", "x1", "x2", "x3", "x4"]
        assert len(rows) == 4
        assert "MSEv:" in res.output

    def test_same_seed_byte_identical(self, workspace):
        a, b = workspace / "a", workspace / "b"
        for out in (a, b):
            res = _run("explain", "--config", str(workspace / "config.yaml"),
                       "--output-dir", str(out))
            assert res.exit_code == 0, res.output
        assert (a / "shapley_values_est.csv").read_bytes() == \
            (b / "shapley_values_est.csv").read_bytes()

    def test_flag_overrides_config(self, workspace):
        a, b = workspace / "a", workspace / "b"
        _run("explain", "--config", str(workspace / "config.yaml"), "--output-dir", str(a))
        res = _run("explain", "--config", str(workspace / "config.yaml"),
                   "--seed", "99", "--output-dir", str(b))
        assert res.exit_code == 0, res.output
        cfg = json.loads((b / "effective_config.json").read_text())
        assert cfg["parameters"]["seed"] == 99
        assert (a / "shapley_values_est.csv").read_bytes() != \
            (b / "shapley_values_est.csv").read_bytes()

    def test_continue_from_extends_trace(self, workspace):
        cfg = yaml.safe_load((workspace / "config.yaml").read_text())
        cfg.update({"iterative": True, "max_iterations": 1, "max_n_coalitions": 14,
                    "convergence_threshold": 0.0})
        (workspace / "iter.yaml").write_text(yaml.safe_dump(cfg))
        out = workspace / "out"
        res = _run("explain", "--config", str(workspace / "iter.yaml"),
                   "--output-dir", str(out))
        assert res.exit_code == 0, res.output
        trace1 = json.loads((out / "convergence_trace.json").read_text())
        cfg["max_iterations"] = 5
        (workspace / "iter.yaml").write_text(yaml.safe_dump(cfg))
        res = _run("explain", "--config", str(workspace / "iter.yaml"),
                   "--output-dir", str(out),
                   "--continue-from", str(out / "state.json"))
        assert res.exit_code == 0, res.output
        trace2 = json.loads((out / "convergence_trace.json").read_text())
        assert len(trace2) > len(trace1)

    def test_external_model_cmd(self, workspace):
        import sys
        script = workspace / "ext.py"
        script.write_text(
            "import sys\n"
            "lines = sys.stdin.read().splitlines()\n"
            "for ln in lines[1:]:\n"
            "    if ln == 'END': break\n"
            "    v = [float(x) for x in ln.split(',')]\n"
            "    out = 1.0\n"
            "    for c, x in zip([2.0, -1.0, 0.5, 1.5], v): out += c * x\n"
            "    print(repr(out))\n"
            "print('END')\n")
        cfg = yaml.safe_load((workspace / "config.yaml").read_text())
        del cfg["model"]
        cfg["model_cmd"] = f"{sys.executable} {script}"
        (workspace / "ext.yaml").write_text(yaml.safe_dump(cfg))
        res = _run("explain", "--config", str(workspace / "ext.yaml"),
                   "--output-dir", str(workspace / "ext_out"))
        assert res.exit_code == 0, res.output


class TestExitCodes:
    def test_missing_config_file_is_user_error(self):
        res = _run("explain", "--config", "/nonexistent.yaml")
        assert res.exit_code == 1

    def test_bad_flag_is_user_error(self):
        res = _run("explain", "--no-such-flag")
        assert res.exit_code == 1

    def test_missing_required_key_is_user_error(self, workspace):
        (workspace / "bad.yaml").write_text(yaml.safe_dump({"approach": "gaussian"}))
        res = _run("explain", "--config", str(workspace / "bad.yaml"))
        assert res.exit_code == 1
        assert "error:" in res.output

    def test_both_model_sources_rejected(self, workspace):
        cfg = yaml.safe_load((workspace / "config.yaml").read_text())
        cfg["model_cmd"] = "true"
        (workspace / "bad.yaml").write_text(yaml.safe_dump(cfg))
        res = _run("explain", "--config", str(workspace / "bad.yaml"))
        assert res.exit_code == 1


class TestCompareCommand:
    def test_ranking_artifacts(self, workspace):
        cfg = yaml.safe_load((workspace / "config.yaml").read_text())
        cfg["approaches"] = ["gaussian", "independence"]
        (workspace / "cmp.yaml").write_text(yaml.safe_dump(cfg))
        out = workspace / "cmp_out"
        res = _run("compare", "--config", str(workspace / "cmp.yaml"),
                   "--output-dir", str(out), "--plot")
        assert res.exit_code == 0, res.output
        report = json.loads((out / "msev_compare.json").read_text())
        assert [e["rank"] for e in report] == [1, 2]
        assert (out / "msev_compare.csv").exists()
        assert (out / "msev_compare.svg").read_text().startswith("<svg")

    def test_single_approach_refused(self, workspace):
        cfg = yaml.safe_load((workspace / "config.yaml").read_text())
        cfg["approaches"] = ["gaussian"]
        (workspace / "cmp.yaml").write_text(yaml.safe_dump(cfg))
        res = _run("compare", "--config", str(workspace / "cmp.yaml"))
        assert res.exit_code == 1


class TestPlotCommand:
    @pytest.fixture()
    def artifacts(self, workspace):
        out = workspace / "out"
        res = _run("explain", "--config", str(workspace / "config.yaml"),
                   "--output-dir", str(out))
        assert res.exit_code == 0, res.output
        return out

    def test_bar(self, artifacts):
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "bar")
        assert res.exit_code == 0, res.output
        assert (artifacts / "plot_bar.svg").read_text().startswith("<svg")

    def test_bar_top_k_aggregates_rest(self, artifacts):
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "bar", "--top-k", "2")
        assert res.exit_code == 0, res.output
        svg = (artifacts / "plot_bar.svg").read_text()
        assert "other (2 features)" in svg

    def test_waterfall(self, artifacts):
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "waterfall",
                   "--index", "1")
        assert res.exit_code == 0, res.output
        assert (artifacts / "plot_waterfall.svg").exists()

    def test_waterfall_bad_index(self, artifacts):
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "waterfall",
                   "--index", "99")
        assert res.exit_code == 1

    def test_scatter_needs_feature(self, artifacts):
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "scatter")
        assert res.exit_code == 1
        res = _run("plot", "--artifacts", str(artifacts), "--kind", "scatter",
                   "--feature", "x2", "--output", str(artifacts / "s.svg"))
        assert res.exit_code == 0, res.output
        assert (artifacts / "s.svg").read_text().startswith("<svg")


class TestForecastCommand:
    def test_forecast_artifacts(self, tmp_path):
        rng = np.random.default_rng(7)
        n = 80
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = 0.5 * y[t - 1] + rng.normal()
        write_csv(Dataset.from_matrix(y[:, None], names=["temp"]), tmp_path / "series.csv")
        cfg = {
            "data": str(tmp_path / "series.csv"),
            "y": "temp",
            "explain_idx": [70, 75],
            "horizon": 2,
            "explain_y_lags": 2,
            "model": {"type": "ar", "y": "temp", "p": 2},
            "approach": "gaussian",
            "seed": 5,
            "n_mc_samples": 30,
            "iterative": False,
            "n_boot": 5,
        }
        (tmp_path / "fc.yaml").write_text(yaml.safe_dump(cfg))
        out = tmp_path / "fc_out"
        res = _run("explain-forecast", "--config", str(tmp_path / "fc.yaml"),
                   "--output-dir", str(out))
        assert res.exit_code == 0, res.output
        with open(out / "forecast_values.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["explain_idx", "horizon", "none", "temp.1", "temp.2"]
        assert len(rows) == 5    # header + 2 origins x 2 horizons
        assert (out / "forecast_sd.csv").exists()

    def test_missing_model_block(self, tmp_path):
        write_csv(Dataset.from_matrix(np.arange(20.0)[:, None], names=["y"]),
                  tmp_path / "series.csv")
        cfg = {"data": str(tmp_path / "series.csv"), "y": "y",
               "explain_idx": [15], "explain_y_lags": 2}
        (tmp_path / "fc.yaml").write_text(yaml.safe_dump(cfg))
        res = _run("explain-forecast", "--config", str(tmp_path / "fc.yaml"))
        assert res.exit_code == 1


class TestVerbosity:
    def test_progress_lines(self, workspace):
        res_quiet = _run("explain", "--config", str(workspace / "config.yaml"),
                         "--output-dir", str(workspace / "q"))
        res_verbose = _run("explain", "--config", str(workspace / "config.yaml"),
                           "--output-dir", str(workspace / "v"),
                           "--verbose", "basic", "--verbose", "progress")
        assert res_quiet.exit_code == 0 and res_verbose.exit_code == 0
        assert len(res_verbose.output.splitlines()) > len(res_quiet.output.splitlines())
