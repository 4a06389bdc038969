"""Typed tabular data, CSV ingestion, feature grouping, and model/data validation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coalitions import indices_to_mask


class DataError(ValueError):
    pass


class ValidationError(DataError):
    pass


@dataclass
class Column:
    name: str
    kind: str  # "numeric" | "categorical"
    values: np.ndarray
    levels: tuple[str, ...] = ()  # recorded vocabulary for categoricals


@dataclass
class Dataset:
    """Immutable column-typed table. Categorical values are stored as level codes."""

    columns: list[Column]

    def __post_init__(self):
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths: {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.columns}

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column named {name!r}")

    def numeric_matrix(self) -> np.ndarray:
        """Rows as a float matrix; categorical columns become their level codes."""
        return np.column_stack([c.values.astype(float) for c in self.columns])

    def is_numeric(self) -> bool:
        return all(c.kind == "numeric" for c in self.columns)

    def take(self, row_indices) -> "Dataset":
        return Dataset([Column(c.name, c.kind, c.values[row_indices], c.levels) for c in self.columns])

    def select(self, names) -> "Dataset":
        return Dataset([self.column(n) for n in names])

    @classmethod
    def from_matrix(cls, X: np.ndarray, names=None, kinds=None, levels=None) -> "Dataset":
        X = np.atleast_2d(np.asarray(X))
        names = names or [f"x{j + 1}" for j in range(X.shape[1])]
        kinds = kinds or {n: "numeric" for n in names}
        cols = []
        for j, n in enumerate(names):
            if kinds.get(n, "numeric") == "categorical":
                cols.append(Column(n, "categorical", X[:, j].astype(int), tuple((levels or {}).get(n, ()))))
            else:
                cols.append(Column(n, "numeric", X[:, j].astype(float)))
        return cls(cols)


def load_csv(path, schema: dict | None = None) -> Dataset:
    """Read a header CSV into a Dataset.

    ``schema`` maps column names to "numeric" or "categorical", or to a dict
    with keys ``kind`` and optional ``levels``. Undeclared columns are parsed
    as numeric; a sidecar file ``<path>.schema.json`` is picked up when no
    schema is given. Silent type inference is deliberately refused: a
    non-numeric token in an undeclared column is an error.
    """
    path = Path(path)
    if schema is None:
        sidecar = path.with_name(path.name + ".schema.json")
        schema = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    schema = {k: (v if isinstance(v, dict) else {"kind": v}) for k, v in schema.items()}

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        raw = {name: [] for name in header}
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{r}: expected {len(header)} fields, got {len(row)}")
            for name, cell in zip(header, row):
                raw[name].append(cell)

    for name in schema:
        if name not in header:
            raise DataError(f"{path}: declared column {name!r} missing from header")

    cols = []
    for name in header:
        decl = schema.get(name, {"kind": "numeric"})
        cells = raw[name]
        if any(c.strip() == "" for c in cells):
            r = next(i for i, c in enumerate(cells) if c.strip() == "") + 2
            raise DataError(f"{path}:{r}: missing value in column {name!r}")
        if decl["kind"] == "categorical":
            levels = tuple(decl.get("levels") or sorted(set(cells)))
            lookup = {lvl: i for i, lvl in enumerate(levels)}
            try:
                codes = np.array([lookup[c] for c in cells], dtype=int)
            except KeyError as err:
                raise DataError(f"{path}: column {name!r}: level {err} not in declared vocabulary") from None
            cols.append(Column(name, "categorical", codes, levels))
        else:
            values = np.empty(len(cells))
            for i, c in enumerate(cells):
                try:
                    values[i] = float(c)
                except ValueError:
                    raise DataError(f"{path}:{i + 2}: column {name!r}: cannot parse {c!r} as numeric") from None
            cols.append(Column(name, "numeric", values))
    return Dataset(cols)


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.names)
        for i in range(data.n_rows):
            row = []
            for c in data.columns:
                row.append(c.levels[int(c.values[i])] if c.kind == "categorical" else repr(float(c.values[i])))
            writer.writerow(row)


@dataclass
class GroupSpec:
    """Ordered named groups of disjoint feature names covering the model features."""

    groups: dict[str, list[str]]

    def validate(self, data: Dataset) -> None:
        seen: set[str] = set()
        for gname, feats in self.groups.items():
            for f in feats:
                if f in seen:
                    raise ValidationError(f"feature {f!r} appears in more than one group")
                if f not in data.names:
                    raise ValidationError(f"group {gname!r} names unknown feature {f!r}")
                seen.add(f)
        missing = set(data.names) - seen
        if missing:
            raise ValidationError(f"groups do not cover features: {sorted(missing)}")

    @property
    def names(self) -> list[str]:
        return list(self.groups)

    def feature_indices(self, data: Dataset) -> list[list[int]]:
        name_to_idx = {n: i for i, n in enumerate(data.names)}
        return [[name_to_idx[f] for f in feats] for feats in self.groups.values()]


def expand_group_coalition(group_mask: int, group_indices: list[list[int]]) -> int:
    """Translate a coalition over groups into a coalition over features."""
    feat_mask = 0
    for g, feats in enumerate(group_indices):
        if group_mask >> g & 1:
            feat_mask |= indices_to_mask(feats)
    return feat_mask


def validate_model_data(feature_spec, train: Dataset, explain: Dataset) -> None:
    """Check train/explain schema consistency, and against the model's spec if given.

    ``feature_spec`` is ``None`` (checks skipped) or a dict with keys
    ``labels``, ``classes`` and ``factor_levels`` mirroring the predictor's
    declared feature specification.
    """
    if train.names != explain.names:
        extra = set(explain.names) - set(train.names)
        missing = set(train.names) - set(explain.names)
        raise ValidationError(
            f"column mismatch between train and explain data: extra={sorted(extra)}, missing={sorted(missing)}"
        )
    for name in train.names:
        tc, ec = train.column(name), explain.column(name)
        if tc.kind != ec.kind:
            raise ValidationError(f"column {name!r}: kind {tc.kind!r} in train but {ec.kind!r} in explain")
        if tc.kind == "categorical":
            unseen = set(ec.levels) - set(tc.levels)
            if unseen:
                raise ValidationError(f"column {name!r}: levels {sorted(unseen)} absent from training vocabulary")
    if feature_spec is None:
        return
    labels = list(feature_spec.get("labels", []))
    if labels and labels != train.names:
        raise ValidationError(f"model expects features {labels}, data has {train.names}")
    for name, cls in (feature_spec.get("classes") or {}).items():
        if train.column(name).kind != cls:
            raise ValidationError(f"column {name!r}: model declares {cls!r}, data has {train.column(name).kind!r}")
    for name, levels in (feature_spec.get("factor_levels") or {}).items():
        if levels is None:
            continue
        unseen = set(train.column(name).levels) - set(levels)
        if unseen:
            raise ValidationError(f"column {name!r}: data levels {sorted(unseen)} unknown to the model")
