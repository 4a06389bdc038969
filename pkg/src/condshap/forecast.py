"""Multi-horizon forecast explanation on lagged time-series designs."""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ValidationError
from .estimators import make_estimator
from .explainer import Explanation, ShapleyExplainer
from .models import FORECAST_PROTOCOL_HEADER, ModelError, Predictor

__all__ = ["TimeSeriesData", "ForecastTask", "ForecastExplanation", "ARPredictor",
           "ExternalForecastPredictor", "build_lagged_design", "default_train_idx",
           "explain_forecast", "lag_groups"]


class ForecastError(ValidationError):
    pass


@dataclass
class TimeSeriesData:
    """Endogenous series plus exogenous series observed through the horizon.

    All series map name -> 1-d array. Exogenous series must extend at least
    ``horizon`` steps past the endogenous length so future values are known.
    """

    y: dict
    xreg: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = {k: np.asarray(v, dtype=float).ravel() for k, v in self.y.items()}
        self.xreg = {k: np.asarray(v, dtype=float).ravel() for k, v in self.xreg.items()}
        if not self.y:
            raise ForecastError("at least one endogenous series is required")
        lengths = {len(v) for v in self.y.values()}
        if len(lengths) != 1:
            raise ForecastError(f"endogenous series lengths differ: {sorted(lengths)}")

    @property
    def n_obs(self) -> int:
        return len(next(iter(self.y.values())))

    def check_horizon(self, horizon: int) -> None:
        need = self.n_obs + horizon
        for name, series in self.xreg.items():
            if len(series) < need:
                raise ForecastError(
                    f"exogenous series {name!r} has {len(series)} observations but "
                    f"{need} are needed to cover horizon {horizon}")


@dataclass
class ForecastTask:
    """What to explain: forecast origins, lag structure and horizon."""

    explain_idx: list
    horizon: int
    explain_y_lags: dict | int
    explain_xreg_lags: dict | int = 0
    train_idx: list | None = None
    group_lags: bool = False
    phi0: np.ndarray | None = None

    def y_lags(self, data: TimeSeriesData) -> dict:
        return _per_series(self.explain_y_lags, data.y, "explain_y_lags")

    def xreg_lags(self, data: TimeSeriesData) -> dict:
        return _per_series(self.explain_xreg_lags, data.xreg, "explain_xreg_lags")

    def validate(self, data: TimeSeriesData) -> None:
        if self.horizon < 1:
            raise ForecastError(f"horizon must be at least 1, got {self.horizon}")
        data.check_horizon(self.horizon)
        y_lags, x_lags = self.y_lags(data), self.xreg_lags(data)
        if all(v == 0 for v in y_lags.values()) and all(v == 0 for v in x_lags.values()):
            raise ForecastError("no lags requested; nothing to explain")
        max_lag = max([*y_lags.values(), *x_lags.values()])
        for t in self.explain_idx:
            if t < max_lag:
                raise ForecastError(f"index {t} does not admit the required {max_lag} lags")
        if self.phi0 is not None and len(np.ravel(self.phi0)) != self.horizon:
            raise ForecastError(
                f"phi0 must give one baseline per horizon step ({self.horizon}), "
                f"got {len(np.ravel(self.phi0))}")


def _per_series(lags, series: dict, what: str) -> dict:
    if isinstance(lags, dict):
        unknown = set(lags) - set(series)
        if unknown:
            raise ForecastError(f"{what} names unknown series {sorted(unknown)}")
        return {name: int(lags.get(name, 0)) for name in series}
    return {name: int(lags) for name in series}


def default_train_idx(n_obs: int, explain_idx, y_lags, xreg_lags=0) -> list:
    """All 1-based origins with enough history, minus the explained ones."""
    lag_values = list(y_lags.values()) if isinstance(y_lags, dict) else [y_lags]
    if isinstance(xreg_lags, dict):
        lag_values += list(xreg_lags.values())
    else:
        lag_values.append(xreg_lags)
    max_lag = max(max(lag_values), 1)
    idx = [t for t in range(max_lag, n_obs + 1) if t not in set(explain_idx)]
    if not idx:
        raise ForecastError("no training indices remain after excluding the explained ones")
    return idx


def build_lagged_design(data: TimeSeriesData, idx, y_lags, xreg_lags=0, horizon: int = 0) -> Dataset:
    """One row per forecast origin t: lagged values plus known future exogenous values.

    Lag ell of a series at origin t (1-based) is the value at t - ell + 1, so
    lag 1 is the current value. Future exogenous columns <name>.F1..Fh hold the
    values at t+1..t+horizon.
    """
    y_lags = _per_series(y_lags, data.y, "y_lags")
    xreg_lags = _per_series(xreg_lags, data.xreg, "xreg_lags")
    idx = [int(t) for t in idx]
    max_lag = max([v for v in (*y_lags.values(), *xreg_lags.values()) if v > 0], default=0)
    if max_lag == 0:
        raise ForecastError("no lags requested; nothing to explain")
    for t in idx:
        if t < max_lag:
            raise ForecastError(f"index {t} does not admit the required {max_lag} lags")
        if t < 1:
            raise ForecastError(f"indices are 1-based; got {t}")
    if horizon:
        data.check_horizon(horizon)
        for t in idx:
            for name, series in data.xreg.items():
                if t + horizon > len(series):
                    raise ForecastError(
                        f"exogenous series {name!r} ends before index {t + horizon}")

    names, columns = [], []
    for name, series in data.y.items():
        for ell in range(1, y_lags[name] + 1):
            names.append(f"{name}.{ell}")
            columns.append(np.array([series[t - ell] for t in idx]))
    for name, series in data.xreg.items():
        for ell in range(1, xreg_lags[name] + 1):
            names.append(f"{name}.{ell}")
            columns.append(np.array([series[t - ell] for t in idx]))
        for q in range(1, horizon + 1):
            names.append(f"{name}.F{q}")
            columns.append(np.array([series[t + q - 1] for t in idx]))
    return Dataset.from_matrix(np.column_stack(columns), names=names)


def lag_groups(design: Dataset) -> dict:
    """Group all lag/future columns of one series under the series name."""
    groups: dict = {}
    for col in design.names:
        base = col.rsplit(".", 1)[0]
        groups.setdefault(base, []).append(col)
    return groups


class ForecastPredictor:
    """Produces an (n_rows, horizon) matrix of forecasts from lagged-design rows."""

    feature_spec = None

    def predict_horizon(self, rows: Dataset, horizon: int) -> np.ndarray:
        raise NotImplementedError


class _HorizonSlice(Predictor):
    """Adapts one forecast step to the single-output predictor interface."""

    def __init__(self, forecaster: ForecastPredictor, horizon: int, step: int):
        self.forecaster = forecaster
        self.horizon = horizon
        self.step = step
        self.feature_spec = getattr(forecaster, "feature_spec", None)

    def predict(self, rows: Dataset) -> np.ndarray:
        out = np.atleast_2d(np.asarray(self.forecaster.predict_horizon(rows, self.horizon), dtype=float))
        if out.shape != (rows.n_rows, self.horizon):
            raise ModelError(
                f"forecast predictor returned shape {out.shape}, expected ({rows.n_rows}, {self.horizon})")
        return out[:, self.step - 1]


class ARPredictor(ForecastPredictor):
    """Autoregression with optional exogenous terms, fitted by least squares.

    The one-step model regresses y[t+1] on the lags y[t], ..., y[t-p+1] and the
    contemporaneous exogenous values x_s[t+1]. Multi-step forecasts iterate the
    one-step model, feeding predictions back in as lags and reading future
    exogenous values from the <name>.F<q> columns of the design row.
    """

    def __init__(self, y_name: str, p: int, xreg_names=()):
        if p < 1:
            raise ForecastError(f"autoregressive order must be at least 1, got {p}")
        self.y_name = y_name
        self.p = p
        self.xreg_names = list(xreg_names)
        self.coef_ = None

    def fit(self, data: TimeSeriesData) -> "ARPredictor":
        y = data.y[self.y_name]
        rows, targets = [], []
        for t in range(self.p, len(y)):  # 0-based: target y[t], lags y[t-1..t-p]
            feats = [y[t - ell] for ell in range(1, self.p + 1)]
            feats += [data.xreg[name][t] for name in self.xreg_names]
            rows.append(feats)
            targets.append(y[t])
        X = np.column_stack([np.ones(len(rows)), np.array(rows)])
        self.coef_, *_ = np.linalg.lstsq(X, np.array(targets), rcond=None)
        return self

    def predict_horizon(self, rows: Dataset, horizon: int) -> np.ndarray:
        if self.coef_ is None:
            raise ModelError("ARPredictor must be fitted before predicting")
        lag_cols = [rows.names.index(f"{self.y_name}.{ell}") for ell in range(1, self.p + 1)]
        X = rows.numeric_matrix()
        out = np.empty((rows.n_rows, horizon))
        for i in range(rows.n_rows):
            lags = list(X[i, lag_cols])  # newest first
            for q in range(1, horizon + 1):
                feats = [1.0, *lags]
                for name in self.xreg_names:
                    feats.append(X[i, rows.names.index(f"{name}.F{q}")])
                pred = float(np.dot(self.coef_, feats))
                out[i, q - 1] = pred
                lags = [pred] + lags[:-1]
        return out


class ExternalForecastPredictor(ForecastPredictor):
    """Forecasting counterpart of the external-model subprocess protocol.

    The handshake line carries the horizon: ``CONDSHAP-FC/1 <M> <h> <names>``.
    The child replies with one line of h comma-separated floats per row,
    then ``END``.
    """

    def __init__(self, command: list, timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout
        self.feature_spec = None

    def predict_horizon(self, rows: Dataset, horizon: int) -> np.ndarray:
        payload = [f"{FORECAST_PROTOCOL_HEADER} {rows.n_cols} {horizon} {','.join(rows.names)}"]
        X = rows.numeric_matrix()
        for i in range(rows.n_rows):
            payload.append(",".join(repr(float(v)) for v in X[i]))
        payload.append("END")
        try:
            proc = subprocess.run(self.command, input="\n".join(payload) + "\n",
                                  capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as err:
            raise ModelError(f"external forecast model timed out after {self.timeout}s") from err
        except OSError as err:
            raise ModelError(f"cannot spawn external forecast model {self.command}: {err}") from err
        if proc.returncode != 0:
            raise ModelError(
                f"external forecast model exited with code {proc.returncode}; "
                f"stderr: {proc.stderr.strip()[:2000]}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if not lines or lines[-1].strip() != "END":
            raise ModelError("external forecast model reply missing END terminator")
        values = lines[:-1]
        if len(values) != rows.n_rows:
            raise ModelError(
                f"external forecast model returned {len(values)} rows for {rows.n_rows} inputs")
        out = np.empty((rows.n_rows, horizon))
        for i, ln in enumerate(values):
            parts = ln.split(",")
            if len(parts) != horizon:
                raise ModelError(
                    f"external forecast model reply row {i + 1} has {len(parts)} values, expected {horizon}")
            try:
                out[i] = [float(p) for p in parts]
            except ValueError:
                raise ModelError(f"external forecast model reply row {i + 1} is not numeric: {ln!r}") from None
        if not np.all(np.isfinite(out)):
            raise ModelError("external forecast model returned non-finite predictions")
        return out


@dataclass
class ForecastExplanation:
    """Per-horizon Shapley explanations of a multi-step forecast."""

    explain_idx: list
    horizon: int
    feature_names: list
    by_horizon: list  # one Explanation per step 1..h

    def header(self) -> list:
        return ["explain_idx", "horizon", "none"] + list(self.feature_names)

    def rows(self) -> list:
        out = []
        for q, expl in enumerate(self.by_horizon, start=1):
            for i, t in enumerate(self.explain_idx):
                out.append([t, q, *expl.phi[i].tolist()])
        return out

    def to_dict(self) -> dict:
        return {"explain_idx": list(self.explain_idx), "horizon": self.horizon,
                "feature_names": list(self.feature_names),
                "by_horizon": [e.to_dict() for e in self.by_horizon]}


def explain_forecast(forecaster: ForecastPredictor, data: TimeSeriesData, task: ForecastTask,
                     approach="gaussian", **params) -> ForecastExplanation:
    """Explain each step of a multi-horizon forecast on the lagged feature space.

    Each step q = 1..h runs the standard pipeline with the step-q forecast as
    the model output. The conditional-distribution model is fitted once on the
    lagged training design and shared by all steps.
    """
    task.validate(data)
    y_lags, x_lags = task.y_lags(data), task.xreg_lags(data)
    train_idx = task.train_idx
    if train_idx is None:
        train_idx = default_train_idx(data.n_obs, task.explain_idx,
                                      y_lags, x_lags)
    train = build_lagged_design(data, train_idx, y_lags, x_lags, task.horizon)
    explain = build_lagged_design(data, task.explain_idx, y_lags, x_lags, task.horizon)

    if task.phi0 is not None:
        phi0 = np.ravel(np.asarray(task.phi0, dtype=float))
    else:
        phi0 = np.full(task.horizon, float(np.mean(next(iter(data.y.values())))))

    groups = lag_groups(train) if task.group_lags else None
    estimator = approach
    if isinstance(approach, str):
        estimator = make_estimator(approach, params.get("n_mc_samples", 1000),
                                   **dict(params.get("approach_options") or {}))
        params = {k: v for k, v in params.items() if k != "approach_options"}

    by_horizon = []
    for q in range(1, task.horizon + 1):
        explainer = ShapleyExplainer(predictor=_HorizonSlice(forecaster, task.horizon, q),
                                     approach=estimator, phi0=float(phi0[q - 1]),
                                     groups=groups, **params)
        explainer.fit(train)
        by_horizon.append(explainer.explain(explain))

    names = by_horizon[0].feature_names
    return ForecastExplanation(list(task.explain_idx), task.horizon, names, by_horizon)
