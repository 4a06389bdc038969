"""Exact contribution functions for all-categorical features via frequency tables."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import EstimatorError, assemble_rows


class UnseenCombinationError(EstimatorError):
    pass


class CategoricalEstimator:
    """Joint frequency counts over full feature tuples; conditionals by division.

    The contribution function is an exact finite sum over the observed sample
    space of the complement features. Unseen conditioning tuples raise by
    default; ``smoothing=True`` adds one pseudo-count per observed tuple.
    """

    name = "categorical"

    def __init__(self, smoothing: bool = False):
        self.smoothing = smoothing

    def prepare(self, train: Dataset, predictor) -> "CategoricalEstimator":
        if any(c.kind != "categorical" for c in train.columns):
            raise EstimatorError("the categorical approach requires all features categorical")
        self.template = train
        self.predictor = predictor
        X = train.numeric_matrix().astype(int)
        self.tuples, counts = np.unique(X, axis=0, return_counts=True)
        self.counts = counts.astype(float)
        if self.smoothing:
            self.counts = self.counts + 1.0
        return self

    def conditional_values(self, mask: int, x_row: np.ndarray):
        """Observed complement tuples and their conditional probabilities."""
        m = self.template.n_cols
        cond = [j for j in range(m) if mask >> j & 1]
        comp = [j for j in range(m) if not mask >> j & 1]
        match = np.all(self.tuples[:, cond] == np.asarray(x_row, dtype=int)[cond], axis=1)
        if not match.any():
            vals = {j: self.template.columns[j].levels[int(x_row[j])] for j in cond}
            raise UnseenCombinationError(f"conditioning combination never observed in training: {vals}")
        z = self.tuples[np.ix_(match.nonzero()[0], comp)]
        probs = self.counts[match] / self.counts[match].sum()
        return z, probs

    def estimate_vS(self, mask: int, x_row: np.ndarray) -> float:
        z, probs = self.conditional_values(mask, x_row)
        full = assemble_rows(mask, self.template.n_cols, np.asarray(x_row, dtype=float), z.astype(float))
        preds = self.predictor.predict_matrix(full, self.template)
        return float(np.dot(probs, preds))

    def estimate_row(self, mask: int, x_explain: Dataset, rng=None) -> np.ndarray:
        X = x_explain.numeric_matrix()
        return np.array([self.estimate_vS(mask, X[i]) for i in range(len(X))])

    # step-wise causal hooks -------------------------------------------------
    def sample_given(self, target_idx, cond_idx, cond_values, rng):
        t, c = list(target_idx), list(cond_idx)
        out = np.empty((len(cond_values), len(t)))
        for i, row in enumerate(np.atleast_2d(cond_values)):
            match = np.all(self.tuples[:, c] == row.astype(int), axis=1) if c else np.ones(len(self.tuples), bool)
            if not match.any():
                raise UnseenCombinationError("conditioning combination never observed in training")
            probs = self.counts[match] / self.counts[match].sum()
            pick = int(rng.choice(match.nonzero()[0], p=probs))
            out[i] = self.tuples[pick, t]
        return out

    def sample_marginal(self, target_idx, n_samples, rng):
        probs = self.counts / self.counts.sum()
        picks = rng.choice(len(self.tuples), size=n_samples, p=probs)
        return self.tuples[np.ix_(picks, list(target_idx))].astype(float)
