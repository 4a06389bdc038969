"""Pluggable prediction interface: built-in predictors and the external-process bridge."""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset

PROTOCOL_HEADER = "CONDSHAP/1"
FORECAST_PROTOCOL_HEADER = "CONDSHAP-FC/1"


class ModelError(RuntimeError):
    pass


class Predictor:
    """Abstract prediction interface: deterministic, one finite float per row."""

    feature_spec: dict | None = None

    def predict(self, rows: Dataset) -> np.ndarray:
        raise NotImplementedError

    def predict_matrix(self, X: np.ndarray, template: Dataset) -> np.ndarray:
        """Predict on raw feature rows laid out like ``template`` columns."""
        X = np.atleast_2d(X)
        return self.predict(Dataset.from_matrix(
            X, template.names, template.kinds,
            {c.name: c.levels for c in template.columns if c.kind == "categorical"}))


class CallbackPredictor(Predictor):
    """Wraps a plain callable mapping a float matrix to a prediction vector."""

    def __init__(self, fn, feature_spec=None):
        self.fn = fn
        self.feature_spec = feature_spec

    def predict(self, rows: Dataset) -> np.ndarray:
        out = np.asarray(self.fn(rows.numeric_matrix()), dtype=float).ravel()
        if out.shape[0] != rows.n_rows:
            raise ModelError(f"callback returned {out.shape[0]} predictions for {rows.n_rows} rows")
        if not np.all(np.isfinite(out)):
            raise ModelError("callback returned non-finite predictions")
        return out


@dataclass
class LinearPredictor(Predictor):
    """Affine model; categorical features contribute via recorded one-hot coefficients."""

    intercept: float
    coefficients: dict[str, float | list[float]]
    feature_spec: dict | None = None

    def predict(self, rows: Dataset) -> np.ndarray:
        out = np.full(rows.n_rows, self.intercept, dtype=float)
        for name, coef in self.coefficients.items():
            col = rows.column(name)
            if col.kind == "categorical":
                coef = np.asarray(coef, dtype=float)
                out += coef[col.values.astype(int)]
            else:
                out += float(coef) * col.values
        return out

    def to_dict(self) -> dict:
        return {"kind": "linear", "intercept": self.intercept, "coefficients": self.coefficients}


@dataclass
class TreeNode:
    feature: str | None = None
    threshold: float | None = None
    left_levels: list[str] | None = None  # categorical split: levels routed left
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    def is_leaf(self) -> bool:
        return self.value is not None


@dataclass
class TreeEnsemblePredictor(Predictor):
    """Sum of binary regression trees plus a base score."""

    trees: list[TreeNode]
    base_score: float = 0.0
    feature_spec: dict | None = None

    def predict(self, rows: Dataset) -> np.ndarray:
        out = np.full(rows.n_rows, self.base_score, dtype=float)
        cols = {c.name: c for c in rows.columns}
        for i in range(rows.n_rows):
            for tree in self.trees:
                node = tree
                while not node.is_leaf():
                    col = cols[node.feature]
                    if col.kind == "categorical":
                        level = col.levels[int(col.values[i])]
                        node = node.left if level in node.left_levels else node.right
                    else:
                        node = node.left if col.values[i] <= node.threshold else node.right
                out[i] += node.value
        return out

    def to_dict(self) -> dict:
        return {"kind": "tree_ensemble", "base_score": self.base_score,
                "trees": [_node_to_dict(t) for t in self.trees]}


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf():
        return {"value": node.value}
    d = {"feature": node.feature, "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}
    if node.left_levels is not None:
        d["left_levels"] = node.left_levels
    else:
        d["threshold"] = node.threshold
    return d


def _node_from_dict(d: dict) -> TreeNode:
    if "value" in d:
        return TreeNode(value=float(d["value"]))
    return TreeNode(feature=d["feature"], threshold=d.get("threshold"),
                    left_levels=d.get("left_levels"),
                    left=_node_from_dict(d["left"]), right=_node_from_dict(d["right"]))


def save_model(predictor, path) -> None:
    Path(path).write_text(json.dumps(predictor.to_dict(), indent=2))


def load_model(path) -> Predictor:
    spec = json.loads(Path(path).read_text())
    kind = spec.get("kind")
    if kind == "linear":
        return LinearPredictor(float(spec["intercept"]), spec["coefficients"],
                               spec.get("feature_spec"))
    if kind == "tree_ensemble":
        return TreeEnsemblePredictor([_node_from_dict(t) for t in spec["trees"]],
                                     float(spec.get("base_score", 0.0)), spec.get("feature_spec"))
    raise ModelError(f"unknown model kind {kind!r} in {path}")


class ExternalPredictor(Predictor):
    """Bridges predictions to a child process over a line-oriented protocol.

    Per batch the child is sent a handshake line ``CONDSHAP/1 <M> <names>``,
    one CSV row per observation, and ``END``; it must reply one float per row
    followed by ``END``. Categorical cells are sent as level strings.
    """

    def __init__(self, command: list[str], timeout: float = 60.0, feature_spec=None):
        self.command = list(command)
        self.timeout = timeout
        self.feature_spec = feature_spec

    def predict(self, rows: Dataset) -> np.ndarray:
        payload = [f"{PROTOCOL_HEADER} {rows.n_cols} {','.join(rows.names)}"]
        for i in range(rows.n_rows):
            cells = []
            for c in rows.columns:
                cells.append(c.levels[int(c.values[i])] if c.kind == "categorical" else repr(float(c.values[i])))
            payload.append(",".join(cells))
        payload.append("END")
        try:
            proc = subprocess.run(self.command, input="\n".join(payload) + "\n",
                                  capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as err:
            raise ModelError(f"external model timed out after {self.timeout}s") from err
        except OSError as err:
            raise ModelError(f"cannot spawn external model {self.command}: {err}") from err
        if proc.returncode != 0:
            raise ModelError(
                f"external model exited with code {proc.returncode}; stderr: {proc.stderr.strip()[:2000]}"
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if not lines or lines[-1].strip() != "END":
            raise ModelError("external model reply missing END terminator")
        values = lines[:-1]
        if len(values) != rows.n_rows:
            raise ModelError(f"external model returned {len(values)} predictions for {rows.n_rows} rows")
        out = np.empty(rows.n_rows)
        for i, ln in enumerate(values):
            try:
                out[i] = float(ln)
            except ValueError:
                raise ModelError(f"external model reply line {i + 1} is not a float: {ln!r}") from None
        if not np.all(np.isfinite(out)):
            raise ModelError("external model returned non-finite predictions")
        return out


def phi0_from_response(y_train) -> float:
    """Recommended baseline: the mean of the training response."""
    y = np.asarray(y_train, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty response vector")
    return float(y.mean())
