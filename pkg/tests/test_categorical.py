"""Exact frequency-table estimator for all-categorical features."""

import numpy as np
import pytest

from condshap.coalitions import enumerate_all, mask_to_indices
from condshap.data import Column, Dataset
from condshap.estimators.categorical import CategoricalEstimator, UnseenCombinationError
from condshap.models import CallbackPredictor
from condshap.solver import exact_shapley, solve_coalition_set


def _cat_dataset(codes, levels_per_col):
    codes = np.asarray(codes, dtype=int)
    cols = [Column(f"c{j}", "categorical", codes[:, j],
                   tuple(f"l{j}{k}" for k in range(levels_per_col[j])))
            for j in range(codes.shape[1])]
    return Dataset(cols)


class TestConditionalTable:
    def setup_method(self):
        # joint sample with known counts
        self.codes = np.array([
            [0, 0], [0, 0], [0, 1], [1, 0], [1, 1], [1, 1], [1, 1],
        ])
        self.train = _cat_dataset(self.codes, [2, 2])
        self.pred = CallbackPredictor(lambda X: 10.0 * X[:, 0] + X[:, 1])
        self.est = CategoricalEstimator().prepare(self.train, self.pred)

    def test_counting_oracle(self):
        # P(c1 | c0=0): counts (0,0)=2, (0,1)=1 -> 2/3, 1/3
        values, probs = self.est.conditional_values(0b01, np.array([0.0, 0.0]))
        lookup = {int(v[0]): p for v, p in zip(values, probs)}
        assert lookup[0] == pytest.approx(2 / 3)
        assert lookup[1] == pytest.approx(1 / 3)

    def test_estimate_vS_weighted_sum(self):
        # v({c0}, x=(0,*)) = 2/3 * f(0,0) + 1/3 * f(0,1) = 1/3
        got = self.est.estimate_vS(0b01, np.array([0.0, 0.0]))
        assert got == pytest.approx((2 / 3) * 0.0 + (1 / 3) * 1.0)

    def test_unseen_combination_error_names_values(self):
        codes = np.array([[0, 0], [1, 1]])
        est = CategoricalEstimator().prepare(_cat_dataset(codes, [2, 2]), self.pred)
        with pytest.raises(UnseenCombinationError):
            est.estimate_vS(0b11, np.array([0.0, 1.0]))

    def test_smoothing_rescues_unseen(self):
        codes = np.array([[0, 0], [1, 1]])
        est = CategoricalEstimator(smoothing=True).prepare(_cat_dataset(codes, [2, 2]), self.pred)
        est.estimate_vS(0b01, np.array([0.0, 1.0]))  # does not raise


class TestExactShapleyEquality:
    def test_matches_bruteforce_game(self):
        rng = np.random.default_rng(21)
        m, levels = 4, [3, 2, 3, 2]
        codes = np.column_stack([rng.integers(0, lv, size=200) for lv in levels])
        train = _cat_dataset(codes, levels)
        table = rng.normal(size=tuple(levels))
        pred = CallbackPredictor(
            lambda X: np.array([table[tuple(row.astype(int))] for row in X]))
        est = CategoricalEstimator().prepare(train, pred)
        x_star = codes[0].astype(float)

        # independent counting oracle for every interior coalition
        def oracle_v(mask):
            s_idx = mask_to_indices(mask, m)
            match = np.all(codes[:, s_idx] == x_star[s_idx].astype(int), axis=1)
            rows = codes[match]
            uniq, counts = np.unique(rows, axis=0, return_counts=True)
            preds = np.array([table[tuple(r)] for r in uniq])
            return float(np.dot(counts / counts.sum(), preds))

        cset = enumerate_all(m)
        grand = float(pred.predict(train.take([0]))[0])
        phi0 = float(pred.predict(train).mean())
        V_est = np.empty((cset.n_coalitions, 1))
        V_oracle = np.empty_like(V_est)
        for r, mask in enumerate(cset.masks):
            if mask == 0:
                V_est[r] = V_oracle[r] = phi0
            elif mask == cset.grand_mask:
                V_est[r] = V_oracle[r] = grand
            else:
                V_est[r] = est.estimate_vS(mask, x_star)
                V_oracle[r] = oracle_v(mask)
        assert np.array_equal(V_est, V_oracle)  # exact: 0 tolerance
        phi = solve_coalition_set(cset, V_est)[:, 0]
        expected = exact_shapley({msk: float(V_oracle[r, 0]) for r, msk in enumerate(cset.masks)}, m)
        assert np.array_equal(phi, expected) or np.allclose(phi, expected, atol=1e-10)
