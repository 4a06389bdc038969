"""Weighted least squares Shapley solver, exact-formula oracle, and bootstrap SDs."""

from __future__ import annotations

from math import comb, factorial

import numpy as np

from .coalitions import (
    BOUNDARY_CONSTANT,
    CoalitionSet,
    _finalize,
    build_Z,
    complement,
    popcount,
    size_probabilities,
)


class SingularSystemError(np.linalg.LinAlgError):
    pass


class IncompleteGameError(ValueError):
    pass


def solve_wls(Z: np.ndarray, weights: np.ndarray, V: np.ndarray, strict: bool = True) -> np.ndarray:
    """Solve the weighted least squares system for the Shapley values.

    Returns an (M+1, N_explain) matrix whose first row is phi_0. Solved via a
    QR-backed least squares on the sqrt-weighted system rather than the normal
    equations, which keeps the large boundary weights well conditioned.
    ``strict=False`` skips the rank check and returns the minimum-norm
    solution; rank-deficient systems are expected in bootstrap resamples.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] != Z.shape[0]:
        V = V.T
    sw = np.sqrt(np.asarray(weights, dtype=float))[:, None]
    A = sw * Z
    if strict:
        rank = np.linalg.matrix_rank(A)
        if rank < Z.shape[1]:
            deficient = _deficient_columns(A)
            raise SingularSystemError(
                f"coalition matrix has rank {rank} < {Z.shape[1]}; "
                f"columns {deficient} are not identifiable (need more / better-spread coalitions)"
            )
    phi, *_ = np.linalg.lstsq(A, sw * V, rcond=None)
    return phi


def _deficient_columns(A: np.ndarray) -> list[int]:
    _, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(A.shape) * np.finfo(float).eps if diag.size else 0.0
    return [int(j) for j in np.nonzero(diag <= tol)[0]]


def exact_shapley(v, m: int) -> np.ndarray:
    """Direct evaluation of the permutation-weighted Shapley sum.

    ``v`` maps every mask in 0..2^m-1 to a game value (dict or indexable).
    Returns (phi_0, phi_1, ..., phi_m). Serves as the independent oracle for
    the WLS solver; complexity O(M 2^M), so m is capped at 20.
    """
    if m > 20:
        raise ValueError(f"exact evaluation is limited to M <= 20, got {m}")
    try:
        values = [float(v[mask]) for mask in range(1 << m)]
    except (KeyError, IndexError) as err:
        raise IncompleteGameError(f"game values missing for some subsets: {err}") from err
    fact = [factorial(i) for i in range(m + 1)]
    phi = np.zeros(m + 1)
    phi[0] = values[0]
    for j in range(m):
        bit = 1 << j
        total = 0.0
        for mask in range(1 << m):
            if mask & bit:
                continue
            s = popcount(mask)
            w = fact[s] * fact[m - s - 1] / fact[m]
            total += w * (values[mask | bit] - values[mask])
        phi[j + 1] = total
    return phi


def solve_coalition_set(cset: CoalitionSet, V: np.ndarray) -> np.ndarray:
    return solve_wls(build_Z(cset), cset.weights, V)


def bootstrap_sd(cset: CoalitionSet, V: np.ndarray, n_boot: int = 100,
                 rng: np.random.Generator | None = None, seed=None) -> np.ndarray:
    """Bootstrap standard deviations of phi over the coalition sampling.

    Resamples the recorded coalition draws with replacement (pairs resampled
    jointly under paired strategies), recomputes the solver weights, re-solves,
    and returns the per-cell SD. Exhaustive sets have no sampling variability.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if cset.strategy == "exhaustive" or cset.total_draws == 0:
        n_explain = V.shape[1] if V.shape[0] == cset.n_coalitions else V.shape[0]
        return np.zeros((cset.m + 1, n_explain))
    if n_boot < 2:
        raise ValueError(f"n_boot must be at least 2, got {n_boot}")
    if rng is None:
        rng = np.random.default_rng(seed)

    if V.shape[0] != cset.n_coalitions:
        V = V.T
    interior = cset.masks[1:-1]
    counts = cset.sample_counts[1:-1]
    det = cset.deterministic[1:-1]
    index_of = {mask: i + 1 for i, mask in enumerate(interior)}
    paired = cset.is_paired()
    c_kernel = cset.strategy in ("paired-c-kernel", "semi-deterministic")
    p = size_probabilities(cset.m)

    # expand the recorded draws; one unit per draw, or per pair when paired
    units: list[int] = []
    for mask, cnt, is_det in zip(interior, counts, det):
        if is_det or cnt == 0:
            continue
        cmask = complement(mask, cset.m)
        if paired and (popcount(mask), mask) > (popcount(cmask), cmask):
            continue  # count each pair once, from its lower member
        units.extend([mask] * int(cnt))

    det_indices = [index_of[mask] for mask, is_det in zip(interior, det) if is_det]
    boots = np.empty((n_boot, cset.m + 1, V.shape[1]))
    for b in range(n_boot):
        resampled = rng.choice(len(units), size=len(units), replace=True)
        cnt: dict[int, int] = {}
        for u in resampled:
            mask = units[u]
            cnt[mask] = cnt.get(mask, 0) + 1
            if paired:
                cmask = complement(mask, cset.m)
                cnt[cmask] = cnt.get(cmask, 0) + 1
        rows = [0] + det_indices + sorted(index_of[mask] for mask in cnt) + [cset.n_coalitions - 1]
        total_draws = sum(cnt.values())
        w_int = []
        for r in rows[1:-1]:
            mask = cset.masks[r]
            p_s = p[popcount(mask) - 1]
            if cset.deterministic[r]:
                w_int.append(p_s)
            elif c_kernel:
                w_int.append(p_s / (1.0 - (1.0 - p_s) ** total_draws))
            else:
                w_int.append(cnt[mask])
        w_int = np.asarray(w_int, dtype=float)
        w = np.concatenate([[BOUNDARY_CONSTANT], w_int / w_int.sum(), [BOUNDARY_CONSTANT]])
        sub = _finalize(cset.m, [cset.masks[r] for r in rows[1:-1]],
                        np.zeros(len(rows) - 2), w_int, "unique-sampled", total_draws)
        boots[b] = solve_wls(build_Z(sub), w, V[rows], strict=False)
    return boots.std(axis=0, ddof=1)


def convergence_criterion(phi: np.ndarray, phi_sd: np.ndarray) -> float:
    """Median over explicands of max-SD relative to the phi range.

    ``phi``/``phi_sd`` are (M+1, N_explain) with phi_0 in row 0; phi_0 is
    excluded from both the max and the range. A zero-range explicand counts as
    0 when its SDs are all zero and +inf otherwise.
    """
    phi = np.atleast_2d(phi)
    feat = phi[1:]
    sd = np.atleast_2d(phi_sd)[1:]
    ratios = np.empty(feat.shape[1])
    for i in range(feat.shape[1]):
        rng_i = feat[:, i].max() - feat[:, i].min()
        max_sd = sd[:, i].max()
        if rng_i == 0:
            ratios[i] = 0.0 if max_sd == 0 else np.inf
        else:
            ratios[i] = max_sd / rng_i
    return float(np.median(ratios))
