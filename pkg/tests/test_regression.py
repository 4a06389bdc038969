"""Regression-paradigm estimators: per-coalition models and the surrogate."""

import numpy as np
import pytest

from condshap.data import Column, Dataset
from condshap.estimators.base import EstimatorError
from condshap.estimators.regression import (
    SeparateRegressionEstimator,
    SurrogateRegressionEstimator,
)
from condshap.models import CallbackPredictor


def _numeric_dataset(X, names=None):
    X = np.atleast_2d(X)
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    return Dataset([Column(n, "numeric", X[:, j], None) for j, n in enumerate(names)])


class TestSeparate:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.X = rng.normal(size=(60, 3))
        self.train = _numeric_dataset(self.X)
        self.pred = CallbackPredictor(lambda X: X @ np.array([2.0, -1.0, 0.5]) + 3.0)
        self.est = SeparateRegressionEstimator(learner="linear").prepare(self.train, self.pred)

    def test_matches_lstsq_oracle(self):
        # v({x1,x3}): regress f(x) on (1, x1, x3) and evaluate at x*
        mask = 0b101
        x_star = np.array([[0.3, 9.9, -0.8]])
        got = self.est.estimate_row(mask, _numeric_dataset(x_star))
        A = np.column_stack([np.ones(60), self.X[:, [0, 2]]])
        z = self.pred.predict(self.train)
        beta, *_ = np.linalg.lstsq(A, z, rcond=None)
        expected = beta[0] + beta[1] * 0.3 + beta[2] * (-0.8)
        assert got[0] == pytest.approx(expected, abs=1e-10)

    def test_model_cached_per_coalition(self):
        x_star = _numeric_dataset(np.zeros((1, 3)))
        self.est.estimate_row(0b011, x_star)
        model = self.est._models[0b011]
        self.est.estimate_row(0b011, x_star)
        assert self.est._models[0b011] is model

    def test_learner_failure_wrapped(self):
        class Broken:
            def fit(self, X, z):
                raise ValueError("boom")

        est = SeparateRegressionEstimator(learner=Broken()).prepare(self.train, self.pred)
        with pytest.raises(EstimatorError, match="learner failed"):
            est.estimate_row(0b001, _numeric_dataset(np.zeros((1, 3))))

    def test_unknown_learner_name(self):
        with pytest.raises(EstimatorError, match="unknown learner"):
            SeparateRegressionEstimator(learner="nope").prepare(
                self.train, self.pred).estimate_row(0b001, _numeric_dataset(np.zeros((1, 3))))


class TestSurrogateEncoding:
    def test_numeric_encoding_by_hand(self):
        X = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]])
        train = _numeric_dataset(X)
        est = SurrogateRegressionEstimator().prepare(
            train, CallbackPredictor(lambda X: X[:, 0]))
        enc = est.encode(X[:1], 0b01)
        # column 0 present: standardized (1-3)/2 = -1; column 1 absent: zero;
        # mask half is the coalition indicator
        assert enc[0, 0] == pytest.approx(-1.0)
        assert enc[0, 1] == 0.0
        assert list(enc[0, 2:]) == [1.0, 0.0]

    def test_categorical_masked_level(self):
        cols = [
            Column("c", "categorical", np.array([0, 1, 2]), ("a", "b", "c")),
            Column("x", "numeric", np.array([1.0, 2.0, 3.0]), None),
        ]
        train = Dataset(cols)
        est = SurrogateRegressionEstimator().prepare(
            train, CallbackPredictor(lambda X: X[:, 1]))
        present = est.encode(train.numeric_matrix()[:1], 0b01)
        absent = est.encode(train.numeric_matrix()[:1], 0b10)
        # present: one-hot of level 0, masked slot off
        assert list(present[0, :4]) == [1.0, 0.0, 0.0, 0.0]
        # absent: only the extra "masked" slot on
        assert list(absent[0, :4]) == [0.0, 0.0, 0.0, 1.0]


class TestSurrogateFit:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.X = rng.normal(size=(80, 3))
        self.train = _numeric_dataset(self.X)
        self.pred = CallbackPredictor(lambda X: X @ np.array([1.0, 2.0, 3.0]))
        self.masks = [0b001, 0b010, 0b011, 0b100, 0b101, 0b110]

    def test_requires_fit_before_estimate(self):
        est = SurrogateRegressionEstimator().prepare(self.train, self.pred)
        with pytest.raises(EstimatorError, match="not fitted"):
            est.estimate_row(0b001, _numeric_dataset(np.zeros((1, 3))))

    def test_full_budget_uses_all_masks(self):
        est = SurrogateRegressionEstimator(learner="linear").prepare(self.train, self.pred)
        est.fit_surrogate([0b000] + self.masks + [0b111])
        out = est.estimate_row(0b011, _numeric_dataset(self.X[:4]))
        assert out.shape == (4,)
        assert np.all(np.isfinite(out))

    def test_budget_subsetting_reproducible(self):
        a = SurrogateRegressionEstimator(learner="linear", n_comb_per_row=2).prepare(
            self.train, self.pred)
        b = SurrogateRegressionEstimator(learner="linear", n_comb_per_row=2).prepare(
            self.train, self.pred)
        a.fit_surrogate(self.masks, rng=np.random.default_rng(9))
        b.fit_surrogate(self.masks, rng=np.random.default_rng(9))
        x = _numeric_dataset(self.X[:3])
        assert np.array_equal(a.estimate_row(0b101, x), b.estimate_row(0b101, x))

    def test_bad_budget_rejected(self):
        est = SurrogateRegressionEstimator(n_comb_per_row=0).prepare(self.train, self.pred)
        with pytest.raises(EstimatorError, match="n_comb_per_row"):
            est.fit_surrogate(self.masks)

    def test_surrogate_learner_failure_wrapped(self):
        class Broken:
            def fit(self, X, z):
                raise RuntimeError("nope")

        est = SurrogateRegressionEstimator(learner=Broken()).prepare(self.train, self.pred)
        with pytest.raises(EstimatorError, match="surrogate learner failed"):
            est.fit_surrogate(self.masks)

    def test_linear_surrogate_recovers_linear_v(self):
        # with a tree learner and additive target, v(S) for the grand-ish
        # coalitions should track the conditional expectation at least in rank
        est = SurrogateRegressionEstimator(learner="linear").prepare(self.train, self.pred)
        est.fit_surrogate(self.masks)
        x = _numeric_dataset(np.array([[2.0, 0.0, 0.0]]))
        v_hi = est.estimate_row(0b001, x)[0]
        x_lo = _numeric_dataset(np.array([[-2.0, 0.0, 0.0]]))
        v_lo = est.estimate_row(0b001, x_lo)[0]
        assert v_hi > v_lo  # positive coefficient on x1 is preserved
