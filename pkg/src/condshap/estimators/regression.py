"""Regression-paradigm contribution functions: separate per-coalition models
and a single surrogate model over mask-augmented rows."""

from __future__ import annotations

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from ..coalitions import mask_to_indices
from ..data import Dataset
from .base import EstimatorError

SURROGATE_COMB_BUDGET = 30


class LinearRegressor:
    """Ordinary least squares with one-hot encoding of categorical inputs."""

    def fit(self, X, z):
        X = np.atleast_2d(X)
        A = np.column_stack([np.ones(len(X)), X])
        self.beta, *_ = np.linalg.lstsq(A, np.asarray(z, dtype=float), rcond=None)
        return self

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.column_stack([np.ones(len(X)), X]) @ self.beta


class TreeRegressor:
    """CART-style regression tree with variance-reduction splits."""

    def __init__(self, max_depth: int = 8, min_leaf: int = 5):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, z):
        self._tree = DecisionTreeRegressor(max_depth=self.max_depth,
                                           min_samples_leaf=self.min_leaf,
                                           random_state=0)
        self._tree.fit(np.atleast_2d(X), np.asarray(z, dtype=float))
        return self

    def predict(self, X):
        return self._tree.predict(np.atleast_2d(X))


LEARNERS = {"linear": LinearRegressor, "tree": TreeRegressor}


def _make_learner(learner):
    if isinstance(learner, str):
        try:
            return LEARNERS[learner]()
        except KeyError:
            raise EstimatorError(f"unknown learner {learner!r}; options: {sorted(LEARNERS)}") from None
    return learner


def _encode_columns(train: Dataset):
    """Per-feature encoders to numeric design columns (one-hot for categoricals)."""
    encoders = []
    for c in train.columns:
        if c.kind == "categorical":
            n_levels = len(c.levels)
            encoders.append(("onehot", n_levels))
        else:
            encoders.append(("numeric", 1))
    return encoders


def _encode(X, col_indices, encoders):
    blocks = []
    for j in col_indices:
        kind, width = encoders[j]
        col = X[:, j]
        if kind == "onehot":
            block = np.zeros((len(X), width))
            block[np.arange(len(X)), col.astype(int)] = 1.0
            blocks.append(block)
        else:
            blocks.append(col[:, None])
    return np.hstack(blocks) if blocks else np.empty((len(X), 0))


class SeparateRegressionEstimator:
    """Fits one regression per coalition on (x_S, f(x)) and evaluates at x_S*."""

    name = "regression_separate"

    def __init__(self, learner="linear"):
        self.learner_spec = learner
        self._models: dict[int, object] = {}

    def prepare(self, train: Dataset, predictor) -> "SeparateRegressionEstimator":
        self.template = train
        self.X = train.numeric_matrix()
        self.z = predictor.predict(train)  # cached once for every coalition
        self.encoders = _encode_columns(train)
        self._models = {}
        return self

    def estimate_row(self, mask: int, x_explain: Dataset, rng=None) -> np.ndarray:
        idx = mask_to_indices(mask, self.template.n_cols)
        if mask not in self._models:
            try:
                model = _make_learner(self.learner_spec)
                model.fit(_encode(self.X, idx, self.encoders), self.z)
            except Exception as err:
                raise EstimatorError(f"learner failed for coalition {idx}: {err}") from err
            self._models[mask] = model
        Xe = x_explain.numeric_matrix()
        return np.asarray(self._models[mask].predict(_encode(Xe, idx, self.encoders)), dtype=float)


class SurrogateRegressionEstimator:
    """One regression over mask-augmented rows estimating every v(S) at once.

    Each training row is encoded once per coalition as a length-2M vector:
    standardized values with masked features zeroed (the training mean), and
    the coalition indicator half. Categorical features get an extra "masked"
    one-hot level instead of a fill value.
    """

    name = "regression_surrogate"

    def __init__(self, learner="tree", n_comb_per_row: int | None = None):
        self.learner_spec = learner
        self.n_comb_per_row = n_comb_per_row

    def prepare(self, train: Dataset, predictor) -> "SurrogateRegressionEstimator":
        self.template = train
        self.X = train.numeric_matrix()
        self.z = predictor.predict(train)
        means = self.X.mean(axis=0)
        sds = self.X.std(axis=0, ddof=1)
        self.means = means
        self.sds = np.where(sds > 0, sds, 1.0)
        self.kinds = [c.kind for c in train.columns]
        self.n_levels = [len(c.levels) if c.kind == "categorical" else 0 for c in train.columns]
        self._model = None
        return self

    def encode(self, X: np.ndarray, mask: int) -> np.ndarray:
        """Fixed-length (value half, mask half) representation for one coalition."""
        X = np.atleast_2d(X)
        m = len(self.kinds)
        value_blocks = []
        mask_half = np.zeros((len(X), m))
        for j in range(m):
            present = bool(mask >> j & 1)
            mask_half[:, j] = 1.0 if present else 0.0
            if self.kinds[j] == "categorical":
                width = self.n_levels[j] + 1  # final slot is the "masked" level
                block = np.zeros((len(X), width))
                if present:
                    block[np.arange(len(X)), X[:, j].astype(int)] = 1.0
                else:
                    block[:, -1] = 1.0
                value_blocks.append(block)
            else:
                std = (X[:, j] - self.means[j]) / self.sds[j] if present else np.zeros(len(X))
                value_blocks.append(std[:, None])
        return np.hstack(value_blocks + [mask_half])

    def fit_surrogate(self, coalition_masks, rng=None) -> "SurrogateRegressionEstimator":
        masks = [msk for msk in coalition_masks if msk not in (0, (1 << len(self.kinds)) - 1)]
        budget = self.n_comb_per_row
        if budget is None:
            budget = len(masks) if len(masks) <= SURROGATE_COMB_BUDGET else SURROGATE_COMB_BUDGET
        if budget < 1:
            raise EstimatorError(f"n_comb_per_row must be >= 1, got {budget}")
        rows = []
        targets = []
        if budget >= len(masks):
            for msk in masks:
                rows.append(self.encode(self.X, msk))
                targets.append(self.z)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            for i in range(len(self.X)):
                for msk in rng.choice(masks, size=budget, replace=False):
                    rows.append(self.encode(self.X[i:i + 1], int(msk)))
                    targets.append(self.z[i:i + 1])
        try:
            self._model = _make_learner(self.learner_spec)
            self._model.fit(np.vstack(rows), np.concatenate(targets))
        except Exception as err:
            raise EstimatorError(f"surrogate learner failed: {err}") from err
        return self

    def estimate_row(self, mask: int, x_explain: Dataset, rng=None) -> np.ndarray:
        if self._model is None:
            raise EstimatorError("surrogate model not fitted; call fit_surrogate() first")
        return np.asarray(self._model.predict(self.encode(x_explain.numeric_matrix(), mask)), dtype=float)
