"""Shapley explanation pipeline: coalition growth, v(S) caching, convergence, persistence."""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .causal import (CausalOrdering, Framework, build_chain, causal_sample,
                     marginal_chain, resolve_framework)
from .coalitions import (CoalitionSet, enumerate_all, mask_to_indices, popcount,
                         sample_coalitions, valid_causal_coalitions)
from .data import Dataset, GroupSpec, ValidationError, expand_group_coalition, validate_model_data
from .estimators import CombinedDispatch, make_estimator
from .estimators.base import EstimatorError, assemble_rows
from .evaluation import MsevResult, msev
from .models import Predictor, phi0_from_response
from .solver import bootstrap_sd, convergence_criterion, solve_coalition_set

STATE_FORMAT = "condshap-state/1"
CONVERGENCE_THRESHOLD = 0.01
MIN_N_BATCHES = 10
MAX_BATCH_SIZE = 10
MAX_ITERATIONS = 20
VERBOSE_LEVELS = ("basic", "progress", "convergence", "shapley", "vS_details")

# tags separating the derived random streams; every stream is keyed
# (seed_base, tag, iteration[, batch]) so continuation replays bit-exactly
_TAG_COALITIONS = 1
_TAG_VS = 2
_TAG_BOOTSTRAP = 3
_TAG_SURROGATE = 4


class ExplainerError(RuntimeError):
    pass


class StateMismatchError(ExplainerError):
    """A saved estimation state does not match the current task."""


@dataclass
class Explanation:
    """Estimated Shapley values with their uncertainty and diagnostics.

    ``phi`` and ``phi_sd`` have one row per explicand; column 0 is the
    no-feature baseline, followed by one column per feature (or group).
    """

    feature_names: list[str]
    phi: np.ndarray
    phi_sd: np.ndarray
    phi0: float
    pred_explain: np.ndarray
    coalitions: CoalitionSet
    V: np.ndarray
    msev: MsevResult | None = None
    convergence_trace: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    saving_path: str | None = None
    framework: str = "symmetric conditional"

    @property
    def n_explain(self) -> int:
        return self.phi.shape[0]

    def efficiency_gap(self) -> np.ndarray:
        """Per explicand: (phi_0 + sum_j phi_j) - f(x*). Zero when efficient."""
        return self.phi.sum(axis=1) - self.pred_explain

    def header(self) -> list[str]:
        return ["none"] + list(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "feature_names": self.feature_names,
            "phi": self.phi.tolist(),
            "phi_sd": self.phi_sd.tolist(),
            "phi0": self.phi0,
            "pred_explain": self.pred_explain.tolist(),
            "framework": self.framework,
            "msev": self.msev.to_dict() if self.msev is not None else None,
            "convergence_trace": self.convergence_trace,
            "timings": self.timings,
        }


def _as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_matrix(np.asarray(data, dtype=float))


def _rng(seed_base: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed_base, *key])


class ShapleyExplainer:
    """Conditional Shapley value explainer with a scikit-learn style interface.

    Construct with a predictor and configuration, ``fit`` on training data,
    then ``explain`` rows of interest. ``get_params``/``set_params`` expose the
    configuration in the usual estimator idiom.
    """

    def __init__(self, predictor=None, approach="gaussian", phi0=None, seed=None,
                 max_n_coalitions=None, iterative=None, initial_n_coalitions=None,
                 paired_sampling=True, reweighting="c-kernel", semi_deterministic=False,
                 n_mc_samples=1000, n_boot=100, convergence_threshold=CONVERGENCE_THRESHOLD,
                 max_iterations=MAX_ITERATIONS, groups=None, causal_ordering=None,
                 confounding=None, asymmetric=False, approach_options=None,
                 min_n_batches=MIN_N_BATCHES, max_batch_size=MAX_BATCH_SIZE,
                 n_workers=None, saving_path=None, verbose=(), log_json=False):
        self.predictor = predictor
        self.approach = approach
        self.phi0 = phi0
        self.seed = seed
        self.max_n_coalitions = max_n_coalitions
        self.iterative = iterative
        self.initial_n_coalitions = initial_n_coalitions
        self.paired_sampling = paired_sampling
        self.reweighting = reweighting
        self.semi_deterministic = semi_deterministic
        self.n_mc_samples = n_mc_samples
        self.n_boot = n_boot
        self.convergence_threshold = convergence_threshold
        self.max_iterations = max_iterations
        self.groups = groups
        self.causal_ordering = causal_ordering
        self.confounding = confounding
        self.asymmetric = asymmetric
        self.approach_options = approach_options
        self.min_n_batches = min_n_batches
        self.max_batch_size = max_batch_size
        self.n_workers = n_workers
        self.saving_path = saving_path
        self.verbose = verbose
        self.log_json = log_json

    _PARAM_NAMES = ("predictor", "approach", "phi0", "seed", "max_n_coalitions",
                    "iterative", "initial_n_coalitions", "paired_sampling", "reweighting",
                    "semi_deterministic", "n_mc_samples", "n_boot", "convergence_threshold",
                    "max_iterations", "groups", "causal_ordering", "confounding",
                    "asymmetric", "approach_options", "min_n_batches", "max_batch_size",
                    "n_workers", "saving_path", "verbose", "log_json")

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "ShapleyExplainer":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r} for ShapleyExplainer")
            setattr(self, name, value)
        return self

    # ------------------------------------------------------------------ fit

    def fit(self, x_train, y_train=None) -> "ShapleyExplainer":
        """Fit the conditional estimators on the training data."""
        if self.predictor is None:
            raise ExplainerError("a predictor is required; pass predictor= to the constructor")
        train = _as_dataset(x_train)
        self.train_ = train
        self.y_train_ = None if y_train is None else np.asarray(y_train, dtype=float).ravel()
        self.m_features_ = train.n_cols

        if self.groups is not None:
            spec = self.groups if isinstance(self.groups, GroupSpec) else GroupSpec(dict(self.groups))
            spec.validate(train)
            self.group_spec_ = spec
            self.group_indices_ = spec.feature_indices(train)
            self.names_ = spec.names
        else:
            self.group_spec_ = None
            self.group_indices_ = None
            self.names_ = list(train.names)
        self.m_ = len(self.names_)
        if self.m_ < 2:
            raise ExplainerError("explanations need at least two features or groups")

        ordering = self._resolve_ordering()
        self.framework_ = resolve_framework(self.asymmetric, ordering, self.confounding, self.m_)
        # chains act on features; translate a group-level ordering accordingly
        if ordering is not None and self.group_spec_ is not None:
            self.feature_ordering_ = ordering.expand_groups(self.group_spec_, train)
        else:
            self.feature_ordering_ = ordering

        options = dict(self.approach_options or {})
        if isinstance(self.approach, (list, tuple)):
            self.estimator_ = CombinedDispatch.from_names(
                list(self.approach), self.m_, self.n_mc_samples, **options)
            prepared = {id(e): e for e in self.estimator_.by_size}.values()
        elif isinstance(self.approach, str):
            self.estimator_ = make_estimator(self.approach, self.n_mc_samples, **options)
            prepared = [self.estimator_]
        else:
            # a prebuilt estimator instance; lets several tasks (e.g. forecast
            # horizons) share one fitted conditional-distribution model
            self.estimator_ = self.approach
            prepared = [self.estimator_]
        t0 = time.perf_counter()
        for est in prepared:
            est.prepare(train, self.predictor)
        self._fit_seconds = time.perf_counter() - t0
        return self

    def _resolve_ordering(self) -> CausalOrdering | None:
        if self.causal_ordering is None:
            return None
        if isinstance(self.causal_ordering, CausalOrdering):
            return self.causal_ordering
        name_to_idx = {n: i for i, n in enumerate(self.names_)}
        comps = []
        for comp in self.causal_ordering:
            idx = []
            for entry in comp:
                if isinstance(entry, str):
                    if entry not in name_to_idx:
                        raise ValidationError(f"causal ordering names unknown feature/group {entry!r}")
                    idx.append(name_to_idx[entry])
                else:
                    idx.append(int(entry))
            comps.append(idx)
        return CausalOrdering.from_lists(comps, self.m_)

    # -------------------------------------------------------------- explain

    def explain(self, x_explain) -> Explanation:
        """Estimate Shapley values for each row of ``x_explain``."""
        self._check_fitted()
        explain = _as_dataset(x_explain)
        validate_model_data(getattr(self.predictor, "feature_spec", None), self.train_, explain)
        return self._run(explain, resume=None)

    def continue_explain(self, x_explain, state_path=None) -> Explanation:
        """Resume a persisted estimation, replaying the original random streams."""
        self._check_fitted()
        explain = _as_dataset(x_explain)
        validate_model_data(getattr(self.predictor, "feature_spec", None), self.train_, explain)
        path = state_path or self.saving_path
        if path is None or not os.path.exists(path):
            raise StateMismatchError(f"no saved state found at {path!r}")
        with open(path) as fh:
            state = json.load(fh)
        if state.get("format") != STATE_FORMAT:
            raise StateMismatchError(f"unrecognized state format {state.get('format')!r}")
        signature = self._signature(explain)
        if state.get("signature") != signature:
            raise StateMismatchError(
                "saved state was produced for a different task "
                "(data, model, approach or configuration changed)")
        return self._run(explain, resume=state)

    def _check_fitted(self):
        if not hasattr(self, "train_"):
            raise ExplainerError("this explainer has not been fitted; call fit(x_train) first")

    def _signature(self, explain: Dataset) -> str:
        h = hashlib.sha256()
        for ds in (self.train_, explain):
            h.update(np.ascontiguousarray(ds.numeric_matrix()).tobytes())
            h.update(",".join(ds.names).encode())
        approach = self.approach if isinstance(self.approach, (str, list, tuple)) \
            else getattr(self.approach, "name", type(self.approach).__name__)
        config = {
            "approach": list(approach) if isinstance(approach, tuple) else approach,
            "approach_options": self.approach_options,
            "phi0": self.phi0,
            "paired_sampling": self.paired_sampling,
            "reweighting": self.reweighting,
            "semi_deterministic": self.semi_deterministic,
            "n_mc_samples": self.n_mc_samples,
            "groups": {g: list(v) for g, v in self.group_spec_.groups.items()} if self.group_spec_ else None,
            "framework": self.framework_.name,
            "ordering": [sorted(c) for c in self.framework_.ordering.components] if self.framework_.ordering else None,
            "confounding": list(self.framework_.confounding) if self.framework_.confounding else None,
        }
        h.update(json.dumps(config, sort_keys=True).encode())
        return h.hexdigest()

    # ----------------------------------------------------------- main loop

    def _run(self, explain: Dataset, resume: dict | None) -> Explanation:
        t_start = time.perf_counter()
        timings = {"fit_estimators": getattr(self, "_fit_seconds", 0.0),
                   "sample_coalitions": 0.0, "estimate_vS": 0.0,
                   "solve": 0.0, "bootstrap": 0.0}

        pred_explain = self.predictor.predict(explain)
        phi0 = self._resolve_phi0()
        budget = self._budget()

        if resume is not None:
            seed_base = int(resume["seed_base"])
            v_cache = {int(k): np.asarray(v, dtype=float) for k, v in resume["v_cache"].items()}
            trace = list(resume["trace"])
            iteration = int(resume["iteration"])
            n_coal = min(int(resume["n_coal_next"]), budget)
        else:
            seed_base = self.seed if self.seed is not None else int(np.random.SeedSequence().entropy % (2 ** 63))
            v_cache = {}
            trace = []
            iteration = 0
            n_coal = self._initial_n_coalitions(budget)

        iterative = self._is_iterative(budget)
        if not iterative:
            n_coal = budget

        cset = None
        V = phi = phi_sd = None
        criterion = np.inf
        while True:
            t0 = time.perf_counter()
            cset = self._build_coalitions(n_coal, seed_base, iteration)
            timings["sample_coalitions"] += time.perf_counter() - t0
            self._log("progress", "coalitions_sampled", iteration=iteration,
                      n_coalitions=cset.n_coalitions, strategy=cset.strategy)

            t0 = time.perf_counter()
            self._estimate_new(cset, explain, v_cache, seed_base, iteration)
            timings["estimate_vS"] += time.perf_counter() - t0

            V = self._assemble_V(cset, v_cache, phi0, pred_explain)
            t0 = time.perf_counter()
            phi = solve_coalition_set(cset, V)
            timings["solve"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            phi_sd = bootstrap_sd(cset, V, n_boot=self.n_boot,
                                  rng=_rng(seed_base, _TAG_BOOTSTRAP, iteration))
            timings["bootstrap"] += time.perf_counter() - t0

            criterion = convergence_criterion(phi, phi_sd)
            exhausted = cset.strategy == "exhaustive" or cset.n_coalitions >= budget
            converged = (iterative and criterion < self.convergence_threshold) or exhausted \
                or (iterative and iteration + 1 >= self.max_iterations) or not iterative
            next_n_coal = min(self._even_interior(2 * cset.n_coalitions), budget)
            trace.append({"iteration": iteration, "n_coalitions": cset.n_coalitions,
                          "criterion": criterion, "converged": bool(converged),
                          "exhaustive": cset.strategy == "exhaustive"})
            self._log("convergence", "iteration_done", iteration=iteration,
                      n_coalitions=cset.n_coalitions, criterion=criterion, converged=bool(converged))
            if self.saving_path:
                self._save_state(explain, seed_base, iteration + 1, next_n_coal, v_cache, trace)
            if converged:
                break
            iteration += 1
            n_coal = next_n_coal

        phi_t = phi.T  # rows per explicand
        sd_t = phi_sd.T
        interior = cset.interior_indices()
        result = Explanation(
            feature_names=list(self.names_),
            phi=phi_t, phi_sd=sd_t, phi0=phi0, pred_explain=pred_explain,
            coalitions=cset, V=V,
            msev=msev(V[interior], pred_explain),
            convergence_trace=trace, timings=timings,
            saving_path=self.saving_path, framework=self.framework_.name)
        timings["total"] = time.perf_counter() - t_start
        self._log("shapley", "explanation_done", phi=phi_t.tolist(), criterion=criterion)
        self._log("basic", "done", n_explain=explain.n_rows, n_coalitions=cset.n_coalitions,
                  msev=result.msev.score)
        return result

    def _resolve_phi0(self) -> float:
        if self.phi0 is not None:
            return float(self.phi0)
        if self.y_train_ is not None:
            return phi0_from_response(self.y_train_)
        return phi0_from_response(self.predictor.predict(self.train_))

    def _budget(self) -> int:
        if self.framework_.coalition_source == "causal":
            full = valid_causal_coalitions(self.framework_.ordering, self.m_).n_coalitions
        else:
            full = 2 ** self.m_
        if self.max_n_coalitions is None:
            return full
        return max(4, min(int(self.max_n_coalitions), full))

    def _is_iterative(self, budget: int) -> bool:
        if self.iterative is not None:
            return bool(self.iterative)
        return self.m_ > 5

    def _initial_n_coalitions(self, budget: int) -> int:
        if self.initial_n_coalitions is not None:
            start = int(self.initial_n_coalitions)
        else:
            start = 2 * (self.m_ + 1)
        return min(self._even_interior(max(4, start)), budget)

    def _even_interior(self, n_coal: int) -> int:
        if self.paired_sampling and self.framework_.paired_allowed and (n_coal - 2) % 2:
            return n_coal + 1
        return n_coal

    def _build_coalitions(self, n_coal: int, seed_base: int, iteration: int) -> CoalitionSet:
        rng = _rng(seed_base, _TAG_COALITIONS, iteration)
        if self.framework_.coalition_source == "causal":
            full = valid_causal_coalitions(self.framework_.ordering, self.m_)
            if n_coal >= full.n_coalitions:
                return full
            return valid_causal_coalitions(self.framework_.ordering, self.m_,
                                           max_n_coalitions=n_coal, rng=rng)
        if n_coal >= 2 ** self.m_:
            return enumerate_all(self.m_)
        paired = self.paired_sampling and self.framework_.paired_allowed
        return sample_coalitions(self.m_, n_coal, paired=paired,
                                 reweighting=self.reweighting,
                                 semi_deterministic=self.semi_deterministic, rng=rng)

    def _assemble_V(self, cset: CoalitionSet, v_cache: dict, phi0: float,
                    pred_explain: np.ndarray) -> np.ndarray:
        n = len(pred_explain)
        V = np.empty((cset.n_coalitions, n))
        V[0] = phi0
        V[-1] = pred_explain
        for i in cset.interior_indices():
            V[i] = v_cache[cset.masks[i]]
        return V

    # --------------------------------------------------------- v(S) rows

    def _estimate_new(self, cset: CoalitionSet, explain: Dataset, v_cache: dict,
                      seed_base: int, iteration: int) -> None:
        new_masks = [msk for msk in cset.masks[1:-1] if msk not in v_cache]
        if not new_masks:
            return
        self._refit_surrogates(cset, seed_base, iteration)
        n_batches = max(1, min(len(new_masks),
                               max(self.min_n_batches,
                                   -(-len(new_masks) // self.max_batch_size))))
        batches = [list(chunk) for chunk in np.array_split(np.array(new_masks, dtype=object), n_batches)]
        batches = [b for b in batches if b]

        def run_batch(b: int):
            rng = _rng(seed_base, _TAG_VS, iteration, b)
            out = {}
            for msk in batches[b]:
                out[msk] = self._estimate_mask(int(msk), explain, rng)
                self._log("vS_details", "vS_estimated", iteration=iteration,
                          coalition=mask_to_indices(int(msk), self.m_), values=out[msk].tolist())
            self._log("progress", "batch_done", iteration=iteration, batch=b,
                      n_batches=len(batches), n_coalitions=len(batches[b]))
            return out

        workers = self._workers()
        if workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(run_batch, range(len(batches))):
                    v_cache.update(result)
        else:
            for b in range(len(batches)):
                v_cache.update(run_batch(b))

    def _workers(self) -> int:
        env = os.environ.get("CONDSHAP_WORKERS")
        if env:
            return max(1, int(env))
        return max(1, int(self.n_workers or 1))

    def _refit_surrogates(self, cset: CoalitionSet, seed_base: int, iteration: int) -> None:
        ests = self.estimator_.by_size if isinstance(self.estimator_, CombinedDispatch) else [self.estimator_]
        seen = set()
        feature_masks = [self._feature_mask(msk) for msk in cset.masks[1:-1]]
        for est in ests:
            if id(est) in seen or not hasattr(est, "fit_surrogate"):
                continue
            seen.add(id(est))
            est.fit_surrogate(feature_masks, rng=_rng(seed_base, _TAG_SURROGATE, iteration))

    def _feature_mask(self, mask: int) -> int:
        if self.group_indices_ is None:
            return mask
        return expand_group_coalition(mask, self.group_indices_)

    def _estimate_mask(self, mask: int, explain: Dataset, rng) -> np.ndarray:
        fmask = self._feature_mask(mask)
        est = self.estimator_.for_coalition(mask) if isinstance(self.estimator_, CombinedDispatch) \
            else self.estimator_
        if self.framework_.sampling == "conditional":
            return np.asarray(est.estimate_row(fmask, explain, rng), dtype=float)

        m = self.m_features_
        if self.framework_.sampling == "marginal":
            chain = marginal_chain(fmask, m)
        else:
            chain = build_chain(fmask, self.feature_ordering_, self.framework_.confounding)
        s_idx = tuple(mask_to_indices(fmask, m))
        if len(chain) == 1 and not chain[0].marginal and chain[0].conditioning == s_idx:
            # the chain collapses to conditioning on the coalition itself:
            # take the plain conditional path so results (and random number
            # consumption) coincide exactly with the conditional framework
            return np.asarray(est.estimate_row(fmask, explain, rng), dtype=float)

        sampler = getattr(est, "sampler", None)
        n_samples = getattr(est, "n_samples", self.n_mc_samples)
        if sampler is None:
            sampler = est  # e.g. the frequency-table estimator exposes the hooks itself
        X = explain.numeric_matrix()
        out = np.empty(len(X))
        for i in range(len(X)):
            rows = causal_sample(chain, sampler, fmask, X[i], n_samples, rng)
            full = assemble_rows(fmask, m, X[i], rows)
            out[i] = float(self.predictor.predict_matrix(full, self.train_).mean())
        return out

    # -------------------------------------------------------- persistence

    def _save_state(self, explain: Dataset, seed_base: int, next_iteration: int,
                    n_coal_next: int, v_cache: dict, trace: list) -> None:
        state = {
            "format": STATE_FORMAT,
            "signature": self._signature(explain),
            "seed_base": seed_base,
            "iteration": next_iteration,
            "n_coal_next": n_coal_next,
            "trace": trace,
            "v_cache": {str(msk): row.tolist() for msk, row in v_cache.items()},
        }
        tmp = f"{self.saving_path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(state, fh)
        os.replace(tmp, self.saving_path)

    # ------------------------------------------------------------ logging

    def _log(self, level: str, event: str, **fields) -> None:
        if level not in self.verbose:
            return
        if self.log_json:
            print(json.dumps({"level": level, "event": event, **fields}))
        else:
            detail = " ".join(f"{k}={v}" for k, v in fields.items()
                              if k not in ("phi", "values"))
            print(f"[{level}] {event} {detail}".rstrip())


def explain(predictor, x_train, x_explain, approach="gaussian", y_train=None, **params) -> Explanation:
    """One-call convenience wrapper around ShapleyExplainer."""
    explainer = ShapleyExplainer(predictor=predictor, approach=approach, **params)
    explainer.fit(x_train, y_train=y_train)
    return explainer.explain(x_explain)
