"""Estimator interfaces and the Monte Carlo contribution-function integrator."""

from __future__ import annotations

import numpy as np

from ..coalitions import mask_to_indices, popcount
from ..data import Dataset


class EstimatorError(RuntimeError):
    pass


class ConditionalSampler:
    """Generates complement-feature samples given the conditioning features.

    ``sample`` serves the plain conditional contribution function; the
    ``sample_given`` / ``sample_marginal`` hooks serve step-wise causal chains
    where the conditioning set is not the coalition itself.
    """

    name = "sampler"

    def fit(self, train: Dataset, predictor=None) -> "ConditionalSampler":
        raise NotImplementedError

    def sample(self, mask: int, x_row: np.ndarray, n_samples: int, rng):
        """Return (rows over the complement features, optional weights).

        Rows have one column per complement feature, in feature order.
        Weights, when present, are nonnegative and sum to one.
        """
        raise NotImplementedError

    def sample_given(self, target_idx, cond_idx, cond_values: np.ndarray, rng) -> np.ndarray:
        """One draw of the target features per row of conditioning values."""
        raise EstimatorError(f"the {self.name!r} approach does not support step-wise conditional sampling")

    def sample_marginal(self, target_idx, n_samples: int, rng) -> np.ndarray:
        """Draws from the (training) marginal of the target features."""
        raise EstimatorError(f"the {self.name!r} approach does not support marginal sampling")


def assemble_rows(mask: int, m: int, x_row: np.ndarray, complement_rows: np.ndarray) -> np.ndarray:
    """Full feature rows: coalition features from x_row, the rest from the samples."""
    comp_idx = [j for j in range(m) if not mask >> j & 1]
    out = np.tile(np.asarray(x_row, dtype=float), (len(complement_rows), 1))
    out[:, comp_idx] = complement_rows
    return out


def estimate_vS_mc(sampler: ConditionalSampler, predictor, mask: int, x_row: np.ndarray,
                   n_samples: int, rng, template: Dataset) -> float:
    """Monte Carlo estimate of v(S, x*) for one explicand.

    Boundary coalitions are the caller's responsibility: v(empty) is phi_0 and
    v(grand) is the model prediction itself.
    """
    m = template.n_cols
    if mask == 0 or mask == (1 << m) - 1:
        raise EstimatorError("boundary coalitions must be filled in by the caller, not estimated")
    rows, weights = sampler.sample(mask, x_row, n_samples, rng)
    preds = predictor.predict_matrix(assemble_rows(mask, m, x_row, rows), template)
    if weights is None:
        return float(preds.mean())
    return float(np.dot(weights, preds))


class MonteCarloEstimator:
    """Adapter running a ConditionalSampler over a row of the V matrix."""

    def __init__(self, sampler: ConditionalSampler, n_samples: int = 1000):
        self.sampler = sampler
        self.n_samples = n_samples
        self.template: Dataset | None = None
        self.predictor = None

    @property
    def name(self):
        return self.sampler.name

    def prepare(self, train: Dataset, predictor) -> "MonteCarloEstimator":
        self.template = train
        self.predictor = predictor
        if getattr(self.sampler, "_fitted_on", None) is not train:
            # conditional-distribution fits are reused across predictors (e.g.
            # per-horizon forecast tasks) as long as the training data is shared
            self.sampler.fit(train, predictor)
            self.sampler._fitted_on = train
        return self

    def estimate_row(self, mask: int, x_explain: Dataset, rng) -> np.ndarray:
        X = x_explain.numeric_matrix()
        batch = getattr(self.sampler, "sample_batch", None)
        if batch is not None:
            m = self.template.n_cols
            samples = batch(mask, X, self.n_samples, rng)  # (n_explain, K, |comp|)
            out = np.empty(len(X))
            for i in range(len(X)):
                full = assemble_rows(mask, m, X[i], samples[i])
                out[i] = float(self.predictor.predict_matrix(full, self.template).mean())
            return out
        return np.array([
            estimate_vS_mc(self.sampler, self.predictor, mask, X[i], self.n_samples, rng, self.template)
            for i in range(len(X))
        ])
