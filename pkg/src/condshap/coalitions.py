"""Coalitions, Shapley kernel weights, and coalition sampling schemes.

A coalition is a subset of the M features (or feature groups), stored as an
integer bitmask: bit j is set iff feature j is part of the coalition. Masks
cap M at 64; group-wise explanation reduces the effective M well below that
in practice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

BOUNDARY_CONSTANT = 1e8
EXHAUSTIVE_LIMIT = 30
MAX_FEATURES = 64

STRATEGIES = ("exhaustive", "unique-sampled", "paired", "paired-c-kernel", "semi-deterministic")


class CoalitionError(ValueError):
    pass


def popcount(mask: int) -> int:
    return int(mask).bit_count()


def complement(mask: int, m: int) -> int:
    return ((1 << m) - 1) ^ mask


def mask_to_indices(mask: int, m: int) -> list[int]:
    return [j for j in range(m) if mask >> j & 1]


def indices_to_mask(indices) -> int:
    mask = 0
    for j in indices:
        mask |= 1 << j
    return mask


def shapley_kernel_weight(m: int, s: int) -> float:
    """Kernel weight k(M, s) for a coalition of size s out of m features.

    Infinite at s = 0 and s = m; those boundary coalitions carry the large
    constant weight instead and must not be requested here.
    """
    if m < 2:
        raise CoalitionError(f"kernel weights need at least 2 features, got M={m}")
    if s <= 0 or s >= m:
        raise CoalitionError(f"kernel weight undefined at boundary size s={s} (M={m}); use the boundary constant")
    return (m - 1) / (comb(m, s) * s * (m - s))


def size_probabilities(m: int) -> np.ndarray:
    """Normalized per-coalition sampling probabilities p_S indexed by size 1..m-1.

    p_S = k(M,|S|) / sum_q k(M,q) * C(M,q); identical for all coalitions of a
    given size, so the array has m-1 entries. Summing p[s] * C(m, s+1... ) over
    sizes gives 1.
    """
    k = np.array([shapley_kernel_weight(m, s) for s in range(1, m)])
    counts = np.array([comb(m, s) for s in range(1, m)], dtype=float)
    return k / float(np.dot(k, counts))


@dataclass
class CoalitionSet:
    """Ordered collection of coalitions with sampling counts and solver weights.

    The empty coalition is always first and the grand coalition last, both with
    the boundary constant as solver weight. Interior weights are normalized to
    sum to one.
    """

    m: int
    masks: list[int]
    sample_counts: np.ndarray
    weights: np.ndarray
    strategy: str
    total_draws: int = 0
    deterministic: np.ndarray | None = None  # per-entry flag for semi-deterministic strata
    boundary_constant: float = BOUNDARY_CONSTANT

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise CoalitionError(f"unknown strategy {self.strategy!r}")
        if self.deterministic is None:
            self.deterministic = np.zeros(len(self.masks), dtype=bool)

    @property
    def n_coalitions(self) -> int:
        return len(self.masks)

    @property
    def grand_mask(self) -> int:
        return (1 << self.m) - 1

    def interior_indices(self) -> np.ndarray:
        return np.arange(1, len(self.masks) - 1)

    def is_paired(self) -> bool:
        return self.strategy in ("paired", "paired-c-kernel", "semi-deterministic")

    def index_of(self, mask: int) -> int:
        return self.masks.index(mask)


def _finalize(m, interior_masks, counts, weights, strategy, total_draws, deterministic=None):
    masks = [0] + list(interior_masks) + [(1 << m) - 1]
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total > 0:
        w = w / total
    full_w = np.concatenate([[BOUNDARY_CONSTANT], w, [BOUNDARY_CONSTANT]])
    full_c = np.concatenate([[0], np.asarray(counts, dtype=int), [0]])
    det = None
    if deterministic is not None:
        det = np.concatenate([[False], np.asarray(deterministic, dtype=bool), [False]])
    return CoalitionSet(m=m, masks=masks, sample_counts=full_c, weights=full_w,
                        strategy=strategy, total_draws=total_draws, deterministic=det)


def enumerate_all(m: int, limit: int = EXHAUSTIVE_LIMIT) -> CoalitionSet:
    """All 2^m coalitions with normalized kernel weights."""
    if m > limit:
        raise CoalitionError(
            f"exhaustive enumeration of 2^{m} coalitions exceeds the limit of 2^{limit}; "
            "use sample_coalitions() instead"
        )
    if m == 1:
        return CoalitionSet(m=1, masks=[0, 1], sample_counts=np.zeros(2, dtype=int),
                            weights=np.array([BOUNDARY_CONSTANT, BOUNDARY_CONSTANT]),
                            strategy="exhaustive")
    interior = []
    weights = []
    for s in range(1, m):
        k = shapley_kernel_weight(m, s)
        for combo in combinations(range(m), s):
            interior.append(indices_to_mask(combo))
            weights.append(k)
    return _finalize(m, interior, np.zeros(len(interior)), weights, "exhaustive", 0)


def sample_coalitions(m: int, n_coal: int, *, paired: bool = True,
                      reweighting: str = "c-kernel", semi_deterministic: bool = False,
                      seed=None, rng: np.random.Generator | None = None) -> CoalitionSet:
    """Coalition set with ``n_coal`` unique coalitions drawn by kernel-weight sampling.

    The empty and grand coalitions are always included. Interior coalitions are
    drawn with replacement from sizes 1..m-1 with per-coalition probability
    proportional to the kernel weight; ``paired`` draws each coalition together
    with its complement. ``semi_deterministic`` first includes whole size strata
    whose expected random coverage is complete, then samples the rest.
    """
    if reweighting not in ("none", "c-kernel"):
        raise CoalitionError(f"unknown reweighting {reweighting!r}")
    if n_coal <= 2:
        raise CoalitionError(f"n_coal must exceed 2, got {n_coal}")
    if n_coal >= 2 ** m:
        return enumerate_all(m)
    if paired and (n_coal - 2) % 2 != 0:
        raise CoalitionError(f"paired sampling needs an even interior count, got n_coal={n_coal}")
    if paired and n_coal < 4:
        raise CoalitionError("paired sampling needs n_coal >= 4")
    if rng is None:
        rng = np.random.default_rng(seed)

    p = size_probabilities(m)  # per-coalition probability by size 1..m-1
    target_interior = n_coal - 2

    det_masks: list[int] = []
    sampled_sizes = list(range(1, m))
    if semi_deterministic:
        det_masks, sampled_sizes = _deterministic_strata(m, target_interior, p)
        if len(det_masks) > target_interior or not sampled_sizes:
            # strata alone exhaust the budget; keep as many full strata as fit
            det_masks = det_masks[:target_interior]
            sampled_sizes = sampled_sizes or []

    n_to_sample = target_interior - len(det_masks)
    counts: dict[int, int] = {}
    total_draws = 0
    if n_to_sample > 0:
        size_p = np.array([p[s - 1] * comb(m, s) for s in sampled_sizes])
        size_p = size_p / size_p.sum()
        det_set = set(det_masks)
        while len(counts) < n_to_sample:
            s = int(rng.choice(sampled_sizes, p=size_p))
            mask = indices_to_mask(rng.choice(m, size=s, replace=False))
            if mask in det_set:
                continue
            draws = [mask, complement(mask, m)] if paired else [mask]
            for d in draws:
                counts[d] = counts.get(d, 0) + 1
                total_draws += 1
            if paired and len(counts) > n_to_sample:
                # final paired draw overshot by one coalition; drop the pair and retry
                for d in draws:
                    counts[d] -= 1
                    total_draws -= 1
                    if counts[d] == 0:
                        del counts[d]

    interior = det_masks + sorted(counts)
    cvec = np.array([0] * len(det_masks) + [counts[msk] for msk in sorted(counts)], dtype=int)
    det_flags = np.array([True] * len(det_masks) + [False] * len(counts))

    if semi_deterministic:
        strategy = "semi-deterministic"
    elif paired:
        strategy = "paired-c-kernel" if reweighting == "c-kernel" else "paired"
    else:
        strategy = "unique-sampled"

    weights = _sampling_weights(m, interior, cvec, det_flags, total_draws, reweighting, p)
    return _finalize(m, interior, cvec, weights, strategy, total_draws, det_flags)


def _deterministic_strata(m, budget, p):
    """Size strata to include fully, per expected coverage of a random sample."""
    det_masks = []
    sampled_sizes = set(range(1, m))
    # walk size pairs (s, m-s) from the outside in; outer sizes have the
    # largest kernel weights and are covered first
    for s in range(1, m // 2 + 1):
        sizes = {s, m - s} & sampled_sizes
        if not sizes:
            continue
        cardinality = sum(comb(m, q) for q in sizes)
        mass = sum(p[q - 1] * comb(m, q) for q in sizes)
        if budget * mass >= cardinality and len(det_masks) + cardinality <= budget:
            for q in sorted(sizes):
                for combo in combinations(range(m), q):
                    det_masks.append(indices_to_mask(combo))
            sampled_sizes -= sizes
        else:
            break
    return det_masks, sorted(sampled_sizes)


def _sampling_weights(m, interior_masks, counts, det_flags, total_draws, reweighting, p):
    weights = np.empty(len(interior_masks))
    for i, mask in enumerate(interior_masks):
        p_s = p[popcount(mask) - 1]
        if det_flags[i]:
            weights[i] = p_s
        elif reweighting == "c-kernel":
            weights[i] = p_s / (1.0 - (1.0 - p_s) ** total_draws) if total_draws else p_s
        else:
            weights[i] = counts[i]
    return weights


def reweight_c_kernel(cset: CoalitionSet) -> CoalitionSet:
    """Replace frequency weights with the at-least-once corrected kernel weights."""
    if cset.strategy == "exhaustive":
        raise CoalitionError("c-kernel reweighting applies to sampled coalition sets only")
    p = size_probabilities(cset.m)
    interior = cset.masks[1:-1]
    weights = _sampling_weights(cset.m, interior, cset.sample_counts[1:-1],
                                cset.deterministic[1:-1], cset.total_draws, "c-kernel", p)
    strategy = "paired-c-kernel" if cset.strategy == "paired" else cset.strategy
    return _finalize(cset.m, interior, cset.sample_counts[1:-1], weights, strategy,
                     cset.total_draws, cset.deterministic[1:-1])


def build_Z(cset: CoalitionSet) -> np.ndarray:
    """Design matrix: all-ones first column, then the coalition bit patterns."""
    m = cset.m
    Z = np.ones((cset.n_coalitions, m + 1))
    for i, mask in enumerate(cset.masks):
        for j in range(m):
            Z[i, j + 1] = mask >> j & 1
    return Z


def valid_causal_coalitions(ordering, m: int | None = None,
                            max_n_coalitions: int | None = None,
                            seed=None, rng: np.random.Generator | None = None) -> CoalitionSet:
    """Coalitions consistent with a causal ordering of feature components.

    A coalition is valid iff every included feature has all features of all
    ancestor components included too, i.e. it is a full prefix of components
    plus any subset of the next one. Weights are the kernel weights normalized
    over the valid set. When ``max_n_coalitions`` is below the valid count,
    interior coalitions are subsampled (unpaired; complements of valid
    coalitions need not be valid).
    """
    components = ordering.components if hasattr(ordering, "components") else [frozenset(c) for c in ordering]
    if m is None:
        m = max(max(c) for c in components) + 1
    grand = (1 << m) - 1
    valid: set[int] = set()
    prefix = 0
    for comp in components:
        idx = sorted(comp)
        for r in range(len(idx) + 1):
            for combo in combinations(idx, r):
                valid.add(prefix | indices_to_mask(combo))
        prefix |= indices_to_mask(idx)
    valid.add(0)
    valid.add(grand)
    interior = sorted(valid - {0, grand})
    weights = [shapley_kernel_weight(m, popcount(msk)) for msk in interior]
    cset = _finalize(m, interior, np.zeros(len(interior)), weights, "exhaustive", 0)
    if max_n_coalitions is not None and max_n_coalitions < cset.n_coalitions:
        if rng is None:
            rng = np.random.default_rng(seed)
        probs = np.array(weights) / np.sum(weights)
        counts: dict[int, int] = {}
        total = 0
        target = max_n_coalitions - 2
        while len(counts) < target:
            i = int(rng.choice(len(interior), p=probs))
            counts[interior[i]] = counts.get(interior[i], 0) + 1
            total += 1
        kept = sorted(counts)
        cvec = np.array([counts[msk] for msk in kept], dtype=int)
        cset = _finalize(m, kept, cvec, cvec.astype(float), "unique-sampled", total)
    return cset
