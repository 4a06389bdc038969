"""The MSEv evaluation criterion and approach comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ComparisonError(ValueError):
    pass


@dataclass
class MsevResult:
    score: float
    sd: float
    per_coalition: np.ndarray   # mean squared deviation per interior coalition
    per_explicand: np.ndarray   # mean squared deviation per explicand

    def to_dict(self) -> dict:
        return {"MSEv": self.score, "MSEv_sd": self.sd,
                "per_coalition": self.per_coalition.tolist(),
                "per_explicand": self.per_explicand.tolist()}


def msev(V_interior: np.ndarray, predictions: np.ndarray) -> MsevResult:
    """Mean squared deviation between f(x) and the estimated v(S, x).

    ``V_interior`` holds one row per interior coalition (the empty and grand
    coalitions are excluded: their values are exact by construction). The SD
    is the standard error of the per-explicand mean squared deviations.
    """
    V = np.atleast_2d(np.asarray(V_interior, dtype=float))
    f = np.asarray(predictions, dtype=float).ravel()
    if V.shape[1] != f.size:
        raise ComparisonError(f"V has {V.shape[1]} explicand columns but {f.size} predictions given")
    sq = (f[None, :] - V) ** 2
    per_coalition = sq.mean(axis=1)
    per_explicand = sq.mean(axis=0)
    score = float(per_coalition.mean())
    n = f.size
    sd = float(per_explicand.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MsevResult(score, sd, per_coalition, per_explicand)


def compare_approaches(results: list[tuple[str, MsevResult]],
                       coalition_keys: list | None = None) -> list[dict]:
    """Ascending-score ranking with SD-overlap warnings.

    ``coalition_keys``, when given, must be identical across entries for the
    scores to be comparable.
    """
    if len(results) < 2:
        raise ComparisonError("need at least two approaches to compare")
    if coalition_keys is not None:
        first = coalition_keys[0]
        for i, keys in enumerate(coalition_keys[1:], start=1):
            if list(keys) != list(first):
                raise ComparisonError(
                    f"approach {results[i][0]!r} was evaluated on a different coalition set; incomparable"
                )
    order = sorted(range(len(results)), key=lambda i: (results[i][1].score, i))
    report = []
    for rank, i in enumerate(order, start=1):
        name, res = results[i]
        entry = {"rank": rank, "approach": name, "MSEv": res.score, "MSEv_sd": res.sd,
                 "overlaps_with": []}
        for j in order:
            if j == i:
                continue
            other = results[j][1]
            if abs(res.score - other.score) <= res.sd + other.sd:
                entry["overlaps_with"].append(results[j][0])
        report.append(entry)
    return report
