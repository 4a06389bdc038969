"""Contribution-function estimators and the per-size dispatch."""

from __future__ import annotations

from ..coalitions import popcount
from .base import ConditionalSampler, EstimatorError, MonteCarloEstimator, estimate_vS_mc
from .categorical import CategoricalEstimator, UnseenCombinationError
from .ctree import CTreeSampler
from .mc import CopulaSampler, EmpiricalSampler, GaussianSampler, IndependenceSampler
from .regression import SeparateRegressionEstimator, SurrogateRegressionEstimator

MC_APPROACHES = ("independence", "empirical", "gaussian", "copula", "ctree", "categorical")
APPROACHES = MC_APPROACHES + ("regression_separate", "regression_surrogate")


def make_estimator(name: str, n_mc_samples: int = 1000, **options):
    """Build the named estimator with its configuration options."""
    if name == "independence":
        return MonteCarloEstimator(IndependenceSampler(), n_mc_samples)
    if name == "empirical":
        keys = {k: options[k] for k in ("sigma", "eta") if k in options}
        return MonteCarloEstimator(EmpiricalSampler(**keys), n_mc_samples)
    if name == "gaussian":
        return MonteCarloEstimator(GaussianSampler(), n_mc_samples)
    if name == "copula":
        return MonteCarloEstimator(CopulaSampler(), n_mc_samples)
    if name == "ctree":
        keys = {k: options[k] for k in ("alpha", "minbucket", "sample") if k in options}
        return MonteCarloEstimator(CTreeSampler(**keys), n_mc_samples)
    if name == "categorical":
        return CategoricalEstimator(smoothing=options.get("smoothing", False))
    if name == "regression_separate":
        return SeparateRegressionEstimator(learner=options.get("learner", "linear"))
    if name == "regression_surrogate":
        return SurrogateRegressionEstimator(learner=options.get("learner", "tree"),
                                            n_comb_per_row=options.get("n_comb_per_row"))
    raise EstimatorError(f"unknown approach {name!r}; options: {APPROACHES}")


class CombinedDispatch:
    """Per-coalition-size estimator selection: element j serves size j+1."""

    def __init__(self, estimators_by_size: list):
        self.by_size = list(estimators_by_size)

    @classmethod
    def from_names(cls, names: list[str], m: int, n_mc_samples: int = 1000, **options):
        if len(names) != m - 1:
            raise EstimatorError(f"a combined approach list must have M-1={m - 1} entries, got {len(names)}")
        cache: dict[str, object] = {}
        bysize = []
        for name in names:
            if name not in cache:
                cache[name] = make_estimator(name, n_mc_samples, **options)
            bysize.append(cache[name])
        return cls(bysize)

    def for_coalition(self, mask: int):
        size = popcount(mask)
        if size < 1 or size > len(self.by_size):
            raise EstimatorError(f"no estimator configured for coalition size {size}")
        return self.by_size[size - 1]
