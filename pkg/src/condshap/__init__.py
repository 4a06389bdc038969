"""Conditional Shapley value explanations for predictive models."""

from .causal import CausalOrdering, CausalSpecError, Framework, resolve_framework
from .coalitions import (CoalitionError, CoalitionSet, enumerate_all, sample_coalitions,
                         shapley_kernel_weight, valid_causal_coalitions)
from .data import DataError, Dataset, GroupSpec, ValidationError, load_csv, write_csv
from .estimators import APPROACHES, CombinedDispatch, EstimatorError, make_estimator
from .evaluation import ComparisonError, MsevResult, compare_approaches, msev
from .explainer import (Explanation, ExplainerError, ShapleyExplainer, StateMismatchError,
                        explain)
from .forecast import (ARPredictor, ForecastError, ForecastTask, TimeSeriesData,
                       build_lagged_design, default_train_idx, explain_forecast)
from .models import (CallbackPredictor, ExternalPredictor, LinearPredictor, ModelError,
                     Predictor, TreeEnsemblePredictor, load_model, phi0_from_response,
                     save_model)
from .solver import (IncompleteGameError, SingularSystemError, bootstrap_sd,
                     convergence_criterion, exact_shapley, solve_wls)

__version__ = "1.0.0"

__all__ = [
    "APPROACHES", "ARPredictor", "CallbackPredictor", "CausalOrdering", "CausalSpecError",
    "CoalitionError", "CoalitionSet", "CombinedDispatch", "ComparisonError", "DataError",
    "Dataset", "EstimatorError", "Explanation", "ExplainerError", "ExternalPredictor",
    "ForecastError", "ForecastTask", "Framework", "GroupSpec", "IncompleteGameError",
    "LinearPredictor", "ModelError", "MsevResult", "Predictor", "ShapleyExplainer",
    "SingularSystemError", "StateMismatchError", "TimeSeriesData", "TreeEnsemblePredictor",
    "ValidationError", "bootstrap_sd", "build_lagged_design", "compare_approaches",
    "convergence_criterion", "default_train_idx", "enumerate_all", "exact_shapley",
    "explain", "explain_forecast", "load_csv", "load_model", "make_estimator", "msev",
    "phi0_from_response", "sample_coalitions", "save_model", "shapley_kernel_weight",
    "solve_wls", "valid_causal_coalitions", "write_csv",
]
