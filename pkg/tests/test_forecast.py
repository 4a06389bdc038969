"""Time-series explanations: lagged designs, AR forecasting, the external protocol."""

import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from condshap.forecast import (
    ARPredictor,
    ExternalForecastPredictor,
    ForecastError,
    ForecastTask,
    TimeSeriesData,
    build_lagged_design,
    default_train_idx,
    explain_forecast,
    lag_groups,
)
from condshap.models import ModelError


class TestLaggedDesign:
    def test_hand_checked_layout(self):
        # 1-based origin t: lag 1 = value at t, lag 2 = value at t-1
        data = TimeSeriesData(y={"temp": [10.0, 11.0, 12.0, 13.0, 14.0]})
        design = build_lagged_design(data, idx=[2, 4], y_lags=2)
        assert design.names == ["temp.1", "temp.2"]
        X = design.numeric_matrix()
        assert list(X[0]) == [11.0, 10.0]   # origin 2
        assert list(X[1]) == [13.0, 12.0]   # origin 4

    def test_future_xreg_columns(self):
        data = TimeSeriesData(y={"y": np.arange(5.0)},
                              xreg={"w": np.arange(100.0, 108.0)})
        design = build_lagged_design(data, idx=[3], y_lags=1, xreg_lags=1, horizon=2)
        assert design.names == ["y.1", "w.1", "w.F1", "w.F2"]
        X = design.numeric_matrix()[0]
        # origin 3 (1-based): w.1 = w[2], future values w[3], w[4]
        assert list(X) == [2.0, 102.0, 103.0, 104.0]

    def test_translation_consistency(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=30)
        data = TimeSeriesData(y={"y": y})
        a = build_lagged_design(data, idx=[5, 6, 7], y_lags=3).numeric_matrix()
        b = build_lagged_design(data, idx=[6, 7, 8], y_lags=3).numeric_matrix()
        # shifting every origin by one shifts the window by one

        assert np.array_equal(a[1:], b[:-1])

    def test_insufficient_history_rejected(self):
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        with pytest.raises(ForecastError, match="lags"):
            build_lagged_design(data, idx=[2], y_lags=4)

    def test_xreg_too_short_for_horizon(self):
        data = TimeSeriesData(y={"y": np.arange(10.0)}, xreg={"w": np.arange(10.0)})
        with pytest.raises(ForecastError):
            build_lagged_design(data, idx=[9], y_lags=1, xreg_lags=1, horizon=3)

    def test_lag_groups(self):
        data = TimeSeriesData(y={"y": np.arange(8.0)}, xreg={"w": np.arange(12.0)})
        design = build_lagged_design(data, idx=[4], y_lags=2, xreg_lags=1, horizon=2)
        assert lag_groups(design) == {"y": ["y.1", "y.2"],
                                      "w": ["w.1", "w.F1", "w.F2"]}


class TestDefaultTrainIdx:
    def test_excludes_explained_and_short_history(self):
        got = default_train_idx(10, explain_idx=[9, 10], y_lags={"y": 3})
        assert got == [3, 4, 5, 6, 7, 8]

    def test_full_length_example(self):
        got = default_train_idx(731, [730, 731], {"temp": 2})
        assert got == list(range(2, 730))

    def test_all_excluded_raises(self):
        with pytest.raises(ForecastError, match="no training indices"):
            default_train_idx(4, explain_idx=[2, 3, 4], y_lags=2)


class TestARPredictor:
    def test_iterated_forecast_by_hand(self):
        # exact AR(1): y[t+1] = 2 + 0.5 y[t]; lstsq recovers it exactly
        y = [1.0]
        for _ in range(40):
            y.append(2.0 + 0.5 * y[-1])
        data = TimeSeriesData(y={"y": np.array(y)})
        ar = ARPredictor("y", p=1).fit(data)
        design = build_lagged_design(data, idx=[10], y_lags=1)
        out = ar.predict_horizon(design, 3)
        y10 = y[9]
        f1 = 2.0 + 0.5 * y10
        f2 = 2.0 + 0.5 * f1
        f3 = 2.0 + 0.5 * f2
        assert np.allclose(out, [[f1, f2, f3]], atol=1e-8)

    def test_xreg_terms_used(self):
        rng = np.random.default_rng(1)
        n = 60
        w = rng.normal(size=n + 3)
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = 1.0 + 0.3 * y[t - 1] + 2.0 * w[t]
        data = TimeSeriesData(y={"y": y}, xreg={"w": w})
        ar = ARPredictor("y", p=1, xreg_names=["w"]).fit(data)
        design = build_lagged_design(data, idx=[30], y_lags=1, xreg_lags=1, horizon=2)
        out = ar.predict_horizon(design, 2)
        f1 = 1.0 + 0.3 * y[29] + 2.0 * w[30]
        f2 = 1.0 + 0.3 * f1 + 2.0 * w[31]
        assert np.allclose(out, [[f1, f2]], atol=1e-6)

    def test_unfitted_rejected(self):
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        design = build_lagged_design(data, idx=[5], y_lags=1)
        with pytest.raises(ModelError, match="fitted"):
            ARPredictor("y", p=1).predict_horizon(design, 1)

    def test_bad_order_rejected(self):
        with pytest.raises(ForecastError, match="order"):
            ARPredictor("y", p=0)


def _script(tmp_path, body):
    path = tmp_path / "model.py"
    path.write_text("#!/usr/bin/env python3\nimport sys\n" + textwrap.dedent(body))
    return [sys.executable, str(path)]


class TestExternalForecastProtocol:
    def test_sum_forecaster_roundtrip(self, tmp_path):
        cmd = _script(tmp_path, """
            lines = sys.stdin.read().splitlines()
            head = lines[0].split()
            assert head[0] == "CONDSHAP-FC/1"
            h = int(head[2])
            for ln in lines[1:]:
                if ln == "END":
                    break
                total = sum(float(v) for v in ln.split(","))
                print(",".join(repr(total + q) for q in range(1, h + 1)))
            print("END")
        """)
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        design = build_lagged_design(data, idx=[4, 7], y_lags=2)
        out = ExternalForecastPredictor(cmd).predict_horizon(design, 2)
        # origin 4: lags sum to 5; origin 7: lags sum to 11
        assert np.array_equal(out, [[6.0, 7.0], [12.0, 13.0]])

    def test_wrong_value_count_rejected(self, tmp_path):
        cmd = _script(tmp_path, """
            lines = sys.stdin.read().splitlines()
            for ln in lines[1:]:
                if ln == "END":
                    break
                print("1.0")
            print("END")
        """)
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        design = build_lagged_design(data, idx=[4], y_lags=1)
        with pytest.raises(ModelError, match="expected 3"):
            ExternalForecastPredictor(cmd).predict_horizon(design, 3)

    def test_missing_end_rejected(self, tmp_path):
        cmd = _script(tmp_path, """
            sys.stdin.read()
            print("1.0")
        """)
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        design = build_lagged_design(data, idx=[4], y_lags=1)
        with pytest.raises(ModelError, match="END"):
            ExternalForecastPredictor(cmd).predict_horizon(design, 1)

    def test_nonzero_exit_carries_stderr(self, tmp_path):
        cmd = _script(tmp_path, """
            print("model exploded", file=sys.stderr)
            sys.exit(3)
        """)
        data = TimeSeriesData(y={"y": np.arange(10.0)})
        design = build_lagged_design(data, idx=[4], y_lags=1)
        with pytest.raises(ModelError, match="model exploded"):
            ExternalForecastPredictor(cmd).predict_horizon(design, 1)


def _ar_fixture(seed=2, n=120):
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.6 * y[t - 1] + rng.normal()
    data = TimeSeriesData(y={"y": y})
    return data, ARPredictor("y", p=2).fit(data)


class TestExplainForecast:
    def test_shape_and_efficiency(self):
        data, ar = _ar_fixture()
        task = ForecastTask(explain_idx=[100, 110], horizon=3, explain_y_lags=2)
        fx = explain_forecast(ar, data, task, approach="gaussian", seed=4,
                              n_mc_samples=50, iterative=False, n_boot=5)
        assert fx.feature_names == ["y.1", "y.2"]
        assert len(fx.rows()) == 6          # 2 origins x 3 horizons
        assert fx.header() == ["explain_idx", "horizon", "none", "y.1", "y.2"]
        for expl in fx.by_horizon:
            assert np.all(np.abs(expl.efficiency_gap()) < 1e-6)

    def test_h1_matches_plain_explain(self):
        from condshap.data import Dataset
        from condshap.explainer import ShapleyExplainer

        data, ar = _ar_fixture()
        task = ForecastTask(explain_idx=[100], horizon=1, explain_y_lags=2,
                            phi0=[0.25])
        fx = explain_forecast(ar, data, task, approach="gaussian", seed=9,
                              n_mc_samples=40, iterative=False, n_boot=5)
        train_idx = default_train_idx(data.n_obs, [100], {"y": 2})
        train = build_lagged_design(data, train_idx, 2)
        x_explain = build_lagged_design(data, [100], 2)

        class Slice:
            def predict(self, rows):
                return ar.predict_horizon(rows, 1)[:, 0]
        from condshap.forecast import _HorizonSlice
        ex = ShapleyExplainer(predictor=_HorizonSlice(ar, 1, 1), approach="gaussian",
                              phi0=0.25, seed=9, n_mc_samples=40, iterative=False,
                              n_boot=5).fit(train)
        plain = ex.explain(x_explain)
        assert np.array_equal(fx.by_horizon[0].phi, plain.phi)

    def test_grouped_lags(self):
        rng = np.random.default_rng(5)
        n = 100
        w = rng.normal(size=n + 2)
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = 0.5 * y[t - 1] + 0.8 * w[t] + 0.1 * rng.normal()
        data = TimeSeriesData(y={"y": y}, xreg={"w": w})
        ar = ARPredictor("y", p=2, xreg_names=["w"]).fit(data)
        task = ForecastTask(explain_idx=[90], horizon=2, explain_y_lags=2,
                            explain_xreg_lags=1, group_lags=True)
        fx = explain_forecast(ar, data, task, approach="gaussian", seed=1,
                              n_mc_samples=40, iterative=False, n_boot=5)
        assert sorted(fx.feature_names) == ["w", "y"]

    def test_validation_errors(self):
        data, _ = _ar_fixture()
        with pytest.raises(ForecastError, match="horizon"):
            ForecastTask([100], 0, 2).validate(data)
        with pytest.raises(ForecastError, match="no lags"):
            ForecastTask([100], 1, 0).validate(data)
        with pytest.raises(ForecastError, match="phi0"):
            ForecastTask([100], 2, 2, phi0=[1.0]).validate(data)
