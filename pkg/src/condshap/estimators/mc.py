"""Monte Carlo samplers: independence, empirical, Gaussian, and Gaussian copula."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from ..data import Dataset
from .base import ConditionalSampler, EstimatorError

JITTER_SCALE = 1e-8


def _mask_split(mask: int, m: int):
    cond = [j for j in range(m) if mask >> j & 1]
    comp = [j for j in range(m) if not mask >> j & 1]
    return cond, comp


def regularized(sigma: np.ndarray) -> np.ndarray:
    """Diagonal jitter proportional to the average variance; applied on failure."""
    dim = sigma.shape[0]
    return sigma + np.eye(dim) * (JITTER_SCALE * np.trace(sigma) / dim + 1e-300)


def _chol(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        sym = regularized((sigma + sigma.T) / 2)
        eigval, eigvec = np.linalg.eigh(sym)
        if eigval.min() < -1e-6 * max(eigval.max(), 1.0):
            raise EstimatorError("conditional covariance is not positive semi-definite") from None
        return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


def _solve_psd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        return np.linalg.solve(regularized(A), B)


class IndependenceSampler(ConditionalSampler):
    """Uniformly resamples training rows; yields marginal Shapley values."""

    name = "independence"

    def __init__(self, enumerate_train: bool = False):
        self.enumerate_train = enumerate_train
        self.X = None

    def fit(self, train: Dataset, predictor=None):
        if train.n_rows == 0:
            raise EstimatorError("empty training set")
        self.X = train.numeric_matrix()
        return self

    def sample(self, mask, x_row, n_samples, rng):
        _, comp = _mask_split(mask, self.X.shape[1])
        if self.enumerate_train:
            return self.X[:, comp], None
        idx = rng.integers(0, len(self.X), size=n_samples)
        return self.X[np.ix_(idx, comp)], None

    def sample_given(self, target_idx, cond_idx, cond_values, rng):
        idx = rng.integers(0, len(self.X), size=len(cond_values))
        return self.X[np.ix_(idx, list(target_idx))]

    def sample_marginal(self, target_idx, n_samples, rng):
        idx = rng.integers(0, len(self.X), size=n_samples)
        return self.X[np.ix_(idx, list(target_idx))]


class EmpiricalSampler(ConditionalSampler):
    """Kernel-weighted training rows, weighted by closeness to the explicand.

    Distances are Mahalanobis on the conditioning block, scaled by the block
    size, computed on standardized features; the Gaussian kernel bandwidth and
    the coverage fraction eta select how many rows contribute.
    """

    name = "empirical"

    def __init__(self, sigma: float = 0.1, eta: float = 0.95):
        if not 0 < eta <= 1:
            raise EstimatorError(f"eta must be in (0, 1], got {eta}")
        if sigma <= 0:
            raise EstimatorError(f"sigma must be positive, got {sigma}")
        self.sigma = sigma
        self.eta = eta

    def fit(self, train: Dataset, predictor=None):
        if not train.is_numeric():
            raise EstimatorError("the empirical approach requires numeric features")
        self.X = train.numeric_matrix()
        self.mean = self.X.mean(axis=0)
        sd = self.X.std(axis=0, ddof=1)
        self.sd = np.where(sd > 0, sd, 1.0)
        self.Xs = (self.X - self.mean) / self.sd
        self.cov = np.atleast_2d(np.cov(self.Xs, rowvar=False))
        return self

    def _weights(self, cond_idx, x_cond_std):
        block = self.cov[np.ix_(cond_idx, cond_idx)]
        diff = self.Xs[:, cond_idx] - x_cond_std
        sol = _solve_psd(block, diff.T)
        d2 = np.einsum("ij,ji->i", diff, sol) / len(cond_idx)
        return np.exp(-d2 / (2.0 * self.sigma ** 2))

    def sample(self, mask, x_row, n_samples, rng):
        cond, comp = _mask_split(mask, self.X.shape[1])
        x_std = (np.asarray(x_row)[cond] - self.mean[cond]) / self.sd[cond]
        w = self._weights(cond, x_std)
        order = np.argsort(-w, kind="stable")
        total = w.sum()
        if total == 0:
            w = np.ones_like(w)
            total = w.sum()
        cum = np.cumsum(w[order]) / total
        k_star = int(np.searchsorted(cum, self.eta, side="right")) + 1
        k_star = min(k_star, len(w))
        top = order[:k_star]
        weights = w[top] / w[top].sum()
        return self.X[np.ix_(top, comp)], weights

    def sample_given(self, target_idx, cond_idx, cond_values, rng):
        cond_idx = list(cond_idx)
        out = np.empty((len(cond_values), len(target_idx)))
        for i, row in enumerate(np.atleast_2d(cond_values)):
            x_std = (row - self.mean[cond_idx]) / self.sd[cond_idx]
            w = self._weights(cond_idx, x_std)
            total = w.sum()
            p = w / total if total > 0 else np.full(len(w), 1.0 / len(w))
            out[i] = self.X[int(rng.choice(len(self.X), p=p)), list(target_idx)]
        return out

    def sample_marginal(self, target_idx, n_samples, rng):
        idx = rng.integers(0, len(self.X), size=n_samples)
        return self.X[np.ix_(idx, list(target_idx))]


class GaussianSampler(ConditionalSampler):
    """Multivariate normal fit to the training data; conditionals in closed form."""

    name = "gaussian"

    def __init__(self, mu: np.ndarray | None = None, sigma: np.ndarray | None = None):
        # explicit parameters override the training fit (used by the copula routine)
        self._mu0 = mu
        self._sigma0 = sigma

    def fit(self, train: Dataset, predictor=None):
        if self._mu0 is not None:
            self.mu, self.sigma = np.asarray(self._mu0, float), np.asarray(self._sigma0, float)
            return self
        if not train.is_numeric():
            raise EstimatorError("the gaussian approach requires numeric features")
        X = train.numeric_matrix()
        self.mu = X.mean(axis=0)
        self.sigma = np.atleast_2d(np.cov(X, rowvar=False))
        return self

    def condition(self, mask: int, x_cond: np.ndarray):
        """Conditional mean and covariance of the complement given the coalition."""
        cond, comp = _mask_split(mask, len(self.mu))
        return self._condition_idx(comp, cond, np.asarray(x_cond, dtype=float))

    def _condition_idx(self, target_idx, cond_idx, x_cond):
        t, c = list(target_idx), list(cond_idx)
        if not c:
            return self.mu[t].copy(), self.sigma[np.ix_(t, t)].copy()
        S_cc = self.sigma[np.ix_(c, c)]
        S_tc = self.sigma[np.ix_(t, c)]
        gain = _solve_psd(S_cc, S_tc.T).T
        mu_cond = self.mu[t] + gain @ (x_cond - self.mu[c])
        sigma_cond = self.sigma[np.ix_(t, t)] - gain @ S_tc.T
        return mu_cond, (sigma_cond + sigma_cond.T) / 2

    def sample(self, mask, x_row, n_samples, rng):
        cond, comp = _mask_split(mask, len(self.mu))
        mu_c, sigma_c = self._condition_idx(comp, cond, np.asarray(x_row, dtype=float)[cond])
        z = rng.standard_normal((n_samples, len(comp)))
        return mu_c + z @ _chol(sigma_c).T, None

    def sample_batch(self, mask, X_rows, n_samples, rng):
        """Shared base normal draws across explicands; only the mean shifts."""
        cond, comp = _mask_split(mask, len(self.mu))
        z = rng.standard_normal((n_samples, len(comp)))
        out = np.empty((len(X_rows), n_samples, len(comp)))
        L = None
        for i, row in enumerate(np.atleast_2d(X_rows)):
            mu_c, sigma_c = self._condition_idx(comp, cond, row[cond])
            if L is None:
                L = _chol(sigma_c)  # covariance depends on the coalition only
            out[i] = mu_c + z @ L.T
        return out

    def sample_given(self, target_idx, cond_idx, cond_values, rng):
        t, c = list(target_idx), list(cond_idx)
        cond_values = np.atleast_2d(cond_values)
        if not c:
            return self.sample_marginal(t, len(cond_values), rng)
        S_cc = self.sigma[np.ix_(c, c)]
        S_tc = self.sigma[np.ix_(t, c)]
        gain = _solve_psd(S_cc, S_tc.T).T
        sigma_cond = self.sigma[np.ix_(t, t)] - gain @ S_tc.T
        mu = self.mu[t] + (cond_values - self.mu[c]) @ gain.T
        z = rng.standard_normal((len(cond_values), len(t)))
        return mu + z @ _chol((sigma_cond + sigma_cond.T) / 2).T

    def sample_marginal(self, target_idx, n_samples, rng):
        t = list(target_idx)
        z = rng.standard_normal((n_samples, len(t)))
        return self.mu[t] + z @ _chol(self.sigma[np.ix_(t, t)]).T


class CopulaSampler(ConditionalSampler):
    """Gaussian copula: empirical margins, Gaussian dependence structure.

    Margins are pushed through the standard normal via the empirical CDF,
    conditioning happens in the transformed space, and samples are mapped back
    with the left-continuous empirical quantile function.
    """

    name = "copula"

    def fit(self, train: Dataset, predictor=None):
        if not train.is_numeric():
            raise EstimatorError("the copula approach requires numeric features")
        self.X = train.numeric_matrix()
        self.n = len(self.X)
        self.sorted_cols = np.sort(self.X, axis=0)
        V = np.column_stack([self._to_normal(self.X[:, j], j) for j in range(self.X.shape[1])])
        self.gaussian = GaussianSampler(mu=V.mean(axis=0), sigma=np.atleast_2d(np.cov(V, rowvar=False)))
        self.gaussian.fit(train)
        return self

    def _to_normal(self, values, j):
        ranks = np.searchsorted(self.sorted_cols[:, j], values, side="right")
        u = np.clip(ranks / (self.n + 1), 1 / (self.n + 1), self.n / (self.n + 1))
        return norm.ppf(u)

    def _from_normal(self, v, j):
        u = norm.cdf(v)
        # left-continuous step quantile over the sorted training values
        idx = np.clip(np.ceil(u * self.n).astype(int) - 1, 0, self.n - 1)
        return self.sorted_cols[idx, j]

    def _back_map(self, rows, idx):
        out = np.empty_like(rows)
        for k, j in enumerate(idx):
            out[:, k] = self._from_normal(rows[:, k], j)
        return out

    def sample(self, mask, x_row, n_samples, rng):
        m = self.X.shape[1]
        cond, comp = _mask_split(mask, m)
        x = np.asarray(x_row, dtype=float)
        v_row = np.empty(m)
        for j in cond:
            v_row[j] = self._to_normal(np.array([x[j]]), j)[0]
        v_samples, _ = self.gaussian.sample(mask, v_row, n_samples, rng)
        return self._back_map(v_samples, comp), None

    def sample_given(self, target_idx, cond_idx, cond_values, rng):
        cond_values = np.atleast_2d(cond_values)
        v_cond = np.column_stack([
            self._to_normal(cond_values[:, k], j) for k, j in enumerate(cond_idx)
        ]) if len(list(cond_idx)) else cond_values
        v = self.gaussian.sample_given(target_idx, cond_idx, v_cond, rng)
        return self._back_map(v, list(target_idx))

    def sample_marginal(self, target_idx, n_samples, rng):
        idx = rng.integers(0, self.n, size=n_samples)
        return self.X[np.ix_(idx, list(target_idx))]
