"""Tabular input: CSV loading, column standardization and k-fold splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input tables."""


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"expected a 2-D matrix, got shape {values.shape}")
        n, m = values.shape
        if n < 1:
            raise DataError("no rows")
        if m < 1:
            raise DataError("no feature columns")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != m:
            raise DataError(f"{len(names)} feature names for {m} columns")
        ids = tuple(str(r) for r in self.row_ids) if len(self.row_ids) else tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise DataError(f"{len(ids)} row ids for {n} rows")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.values[rows], self.feature_names, tuple(self.row_ids[i] for i in rows))

    def with_values(self, values: np.ndarray) -> "Dataset":
        return Dataset(values, self.feature_names, self.row_ids)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def load_csv(path: str | Path, has_header: bool = True) -> Dataset:
    """Read a rectangular numeric CSV file.

    Without a header the columns are named ``f0, f1, ...``. Row ids are the
    zero-based data row positions. Errors report 1-based file rows and columns.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    names = None
    first_data_line = 1
    if has_header and rows:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_data_line = 2
    if not rows:
        raise DataError(f"no rows in {path}")
    width = len(names) if names is not None else len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + first_data_line
        if len(row) != width:
            raise DataError(f"ragged row {line}: expected {width} cells, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell {cell.strip()!r} at ({line},{j + 1})") from None
    if names is None:
        names = [f"f{j}" for j in range(width)]
    return Dataset(values, tuple(names), tuple(str(i) for i in range(len(rows))))


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write values with a header row; floats use ``repr`` so they reload exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.feature_names)
        for row in d.values:
            w.writerow([repr(float(v)) for v in row])


def standardize(d: Dataset) -> Dataset:
    """Center every column and scale it to unit population standard deviation.

    Zero-variance columns are kept as all-zero columns so feature indices stay stable.
    """
    x = d.values
    mean = x.mean(axis=0)
    centered = x - mean
    std = np.sqrt((centered**2).mean(axis=0))
    # columns whose spread is rounding noise around a constant count as constant
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    out = centered / scale
    out[:, constant] = 0.0
    return d.with_values(out)


def split_folds(d: Dataset | int, k: int, seed: int) -> FoldPlan:
    """Shuffle row indices with ``seed`` and deal them round-robin into ``k`` folds."""
    n = d if isinstance(d, int) else d.n_points
    if not 2 <= k <= n:
        raise DataError(f"fold count k={k} out of range [2, {n}]")
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[order] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k, assignments, seed)
