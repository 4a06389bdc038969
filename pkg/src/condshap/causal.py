"""Causal chain-graph orderings, step-wise sampling chains, and framework selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coalitions import indices_to_mask, mask_to_indices
from .data import GroupSpec
from .estimators.base import EstimatorError


class CausalSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CausalOrdering:
    """Ordered partition of the feature (or group) indices into chain components.

    Component i is an ancestor of component j iff i < j.
    """

    components: tuple[frozenset, ...]

    @classmethod
    def from_lists(cls, lists, m: int) -> "CausalOrdering":
        comps = tuple(frozenset(int(i) for i in c) for c in lists)
        seen: set[int] = set()
        for c in comps:
            if c & seen:
                raise CausalSpecError(f"components overlap at indices {sorted(c & seen)}")
            seen |= c
        if seen != set(range(m)):
            raise CausalSpecError(f"components must partition 0..{m - 1}, got {sorted(seen)}")
        return cls(comps)

    @property
    def m(self) -> int:
        return sum(len(c) for c in self.components)

    def expand_groups(self, spec: GroupSpec, data) -> "CausalOrdering":
        """Translate a group-level ordering into feature indices."""
        group_idx = spec.feature_indices(data)
        comps = tuple(frozenset(j for g in comp for j in group_idx[g]) for comp in self.components)
        return CausalOrdering(comps)


@dataclass(frozen=True)
class ChainStep:
    target: tuple[int, ...]       # features to generate, subset of the complement
    conditioning: tuple[int, ...] # features already fixed (by x*) or generated earlier
    marginal: bool                # no conditioning at all


def build_chain(mask: int, ordering: CausalOrdering, confounding) -> list[ChainStep]:
    """Sampling steps generating the complement under the do-distribution.

    Components are traversed in causal order. A confounded component is
    sampled conditional on its parent features only (the component's own
    coalition features are dropped); an unconfounded component additionally
    conditions on them. Parents of a component are all features in all
    ancestor components.
    """
    m = ordering.m
    confounding = list(confounding) if confounding is not None else [False] * len(ordering.components)
    if len(confounding) != len(ordering.components):
        raise CausalSpecError(
            f"confounding flags ({len(confounding)}) must match components ({len(ordering.components)})"
        )
    steps: list[ChainStep] = []
    ancestors: set[int] = set()
    s_idx = set(mask_to_indices(mask, m))
    for comp, confounded in zip(ordering.components, confounding):
        target = sorted(comp - s_idx)
        if target:
            cond = set(ancestors)
            if not confounded:
                cond |= comp & s_idx
            steps.append(ChainStep(tuple(target), tuple(sorted(cond)), marginal=not cond))
        ancestors |= comp
    _check_chain(steps, mask, m)
    return steps


def _check_chain(steps, mask, m):
    available = set(mask_to_indices(mask, m))
    covered: set[int] = set()
    for step in steps:
        if not set(step.conditioning) <= available:
            raise CausalSpecError(f"step conditions on features not yet available: {step}")
        available |= set(step.target)
        covered |= set(step.target)
    if covered != set(j for j in range(m) if not mask >> j & 1):
        raise CausalSpecError("chain steps do not partition the complement features")


def causal_sample(chain, sampler, mask: int, x_row, n_samples: int, rng) -> np.ndarray:
    """Rows over the complement features drawn from the interventional distribution.

    The first step draws all n_samples rows at once; every later step draws one
    row per partial sample, conditioning on that sample's realized values.
    """
    x_row = np.asarray(x_row, dtype=float)
    m = len(x_row)
    partial = np.tile(x_row, (n_samples, 1))
    for step in chain:
        t = list(step.target)
        try:
            if step.marginal:
                partial[:, t] = sampler.sample_marginal(t, n_samples, rng)
            else:
                c = list(step.conditioning)
                partial[:, t] = sampler.sample_given(t, c, partial[:, c], rng)
        except EstimatorError as err:
            raise EstimatorError(f"causal chain step {step} failed: {err}") from err
    comp = [j for j in range(m) if not mask >> j & 1]
    return partial[:, comp]


@dataclass(frozen=True)
class Framework:
    """Which coalitions participate and which distribution the samples follow."""

    name: str
    coalition_source: str          # "all" | "causal"
    sampling: str                  # "conditional" | "causal" | "marginal"
    ordering: CausalOrdering | None = None
    confounding: tuple | None = None

    @property
    def paired_allowed(self) -> bool:
        # complements of causally valid coalitions need not be valid
        return self.coalition_source == "all"


def resolve_framework(asymmetric: bool, ordering: CausalOrdering | None, confounding,
                      m: int | None = None) -> Framework:
    """Map the flag/argument combination onto the supported methodologies."""
    if ordering is None:
        if confounding is None:
            return Framework("asymmetric conditional" if asymmetric else "symmetric conditional",
                             "all", "conditional")
        if confounding is True and not asymmetric:
            # one all-features confounded component: the do-distribution is the plain marginal
            return Framework("symmetric marginal", "all", "marginal")
        raise CausalSpecError(
            "confounding requires a causal_ordering (except confounding=True for symmetric marginal)"
        )
    source = "causal" if asymmetric else "all"
    if confounding is None:
        return Framework("asymmetric conditional" if asymmetric else "symmetric conditional",
                         source, "conditional", ordering, None)
    flags = tuple(bool(b) for b in (confounding if hasattr(confounding, "__len__") else
                                    [confounding] * len(ordering.components)))
    name = ("asymmetric" if asymmetric else "symmetric") + " causal"
    return Framework(name, source, "causal", ordering, flags)


def marginal_chain(mask: int, m: int) -> list[ChainStep]:
    """Single marginal step over the whole complement."""
    ordering = CausalOrdering.from_lists([list(range(m))], m)
    return build_chain(mask, ordering, [True])
