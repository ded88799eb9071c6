"""Mixed numeric/categorical/source input domains and multi-source datasets.

A point ``u = (x, t, s)`` carries ``dx`` real inputs, ``dt`` categorical level
indices and a data-source index.  Datasets from several sources are stacked
row-wise and every row is tagged with the index of the source it came from.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True)
class ProblemSpace:
    """Bounds, categorical levels and source layout of an optimization problem.

    Source indices are zero-based internally; ``hf_index`` names the trusted
    (high-fidelity) source.
    """

    numeric_bounds: tuple
    categorical_levels: tuple = ()
    num_sources: int = 1
    hf_index: int = 0
    direction: str = MINIMIZE
    names: tuple = ()

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.numeric_bounds)
        object.__setattr__(self, "numeric_bounds", bounds)
        object.__setattr__(self, "categorical_levels", tuple(int(l) for l in self.categorical_levels))
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"numeric bound must satisfy lo < hi, got [{lo}, {hi}]")
        for l in self.categorical_levels:
            if l < 2:
                raise ValueError(f"categorical input needs at least 2 levels, got {l}")
        if self.num_sources < 1:
            raise ValueError("num_sources must be >= 1")
        if not 0 <= self.hf_index < self.num_sources:
            raise ValueError(f"hf_index {self.hf_index} outside [0, {self.num_sources})")
        if self.direction not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"direction must be '{MAXIMIZE}' or '{MINIMIZE}'")

    @property
    def dx(self) -> int:
        return len(self.numeric_bounds)

    @property
    def dt(self) -> int:
        return len(self.categorical_levels)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.numeric_bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.numeric_bounds])

    @property
    def sign(self) -> float:
        """Factor mapping user responses onto the internal maximization scale."""
        return 1.0 if self.direction == MAXIMIZE else -1.0

    def level_combinations(self) -> list[tuple[int, ...]]:
        """Every combination of categorical levels (a single empty tuple if dt=0)."""
        return list(itertools.product(*(range(l) for l in self.categorical_levels)))

    def with_sources(self, num_sources: int, hf_index: int) -> "ProblemSpace":
        return ProblemSpace(self.numeric_bounds, self.categorical_levels, num_sources,
                            hf_index, self.direction, self.names)


@dataclass(frozen=True)
class MixedPoint:
    x: tuple
    t: tuple = ()
    s: int = 0

    @classmethod
    def make(cls, x, t=(), s=0) -> "MixedPoint":
        return cls(tuple(float(v) for v in np.atleast_1d(x)), tuple(int(v) for v in t), int(s))


def encode_categorical(t: Sequence[int], levels: Sequence[int]) -> np.ndarray:
    """Grouped one-hot prior vector for a combination of categorical levels.

    Block ``i`` has length ``levels[i]`` and a single one at position ``t[i]``.

    >>> encode_categorical([1, 0], [2, 3])
    array([0., 1., 1., 0., 0.])
    """
    if len(t) != len(levels):
        raise ValueError(f"expected {len(levels)} level indices, got {len(t)}")
    out = np.zeros(int(sum(levels)))
    offset = 0
    for ti, li in zip(t, levels):
        if not 0 <= ti < li:
            raise ValueError(f"level index {ti} out of range for a variable with {li} levels")
        out[offset + ti] = 1.0
        offset += li
    return out


def encode_source(s: int, ds: int) -> np.ndarray:
    """One-hot prior vector of a source index."""
    if not 0 <= s < ds:
        raise ValueError(f"source index {s} out of range for {ds} sources")
    out = np.zeros(ds)
    out[s] = 1.0
    return out


def encode_categorical_rows(T: np.ndarray, levels: Sequence[int]) -> np.ndarray:
    """Row-wise :func:`encode_categorical` for an ``(n, dt)`` integer array."""
    T = np.asarray(T, dtype=int).reshape(-1, len(levels))
    out = np.zeros((T.shape[0], int(sum(levels))))
    offset = 0
    for i, li in enumerate(levels):
        col = T[:, i]
        if np.any((col < 0) | (col >= li)):
            raise ValueError(f"level index out of range in categorical column {i}")
        out[np.arange(T.shape[0]), offset + col] = 1.0
        offset += li
    return out


def scale_to_unit(x, lower, upper) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    width = upper - lower
    if np.any(width <= 0):
        raise ValueError("zero-width or inverted interval")
    return (np.asarray(x, dtype=float) - lower) / width


def unscale_from_unit(xu, lower, upper) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(upper - lower <= 0):
        raise ValueError("zero-width or inverted interval")
    return lower + np.asarray(xu, dtype=float) * (upper - lower)


@dataclass(frozen=True)
class MultiSourceDataset:
    """Concatenated samples from all sources.

    Rows keep the order in which they were supplied; ``S`` tags each row with
    its source.  ``X`` is in the user's original units.
    """

    X: np.ndarray
    T: np.ndarray
    S: np.ndarray
    y: np.ndarray
    costs: tuple
    levels: tuple = ()
    counts: tuple = field(init=False)

    def __post_init__(self):
        n = len(np.asarray(self.y))
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            X = X.reshape(n, -1)
        T = np.asarray(self.T, dtype=int).reshape(n, -1)
        S = np.asarray(self.S, dtype=int).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (X.shape[0] == T.shape[0] == S.shape[0] == y.shape[0]):
            raise ValueError("X, T, S and y must have the same number of rows")
        costs = tuple(float(c) for c in self.costs)
        if any(c <= 0 for c in costs):
            raise ValueError("all source costs must be strictly positive")
        if S.size and (S.min() < 0 or S.max() >= len(costs)):
            raise ValueError("source index outside the cost table")
        for arr in (X, T, S, y):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        object.__setattr__(self, "counts", tuple(int(np.sum(S == j)) for j in range(len(costs))))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def num_sources(self) -> int:
        return len(self.costs)

    @property
    def dx(self) -> int:
        return self.X.shape[1]

    @property
    def dt(self) -> int:
        return self.T.shape[1]

    @property
    def total_cost(self) -> float:
        return float(sum(c * n for c, n in zip(self.costs, self.counts)))

    def points(self) -> list[MixedPoint]:
        return [MixedPoint.make(self.X[i], self.T[i], self.S[i]) for i in range(self.n)]

    def split(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Inverse of :func:`assemble`: per-source ``(inputs, responses)`` tables."""
        out = []
        for j in range(self.num_sources):
            rows = self.S == j
            out.append((np.hstack([self.X[rows], self.T[rows].astype(float)]), self.y[rows].copy()))
        return out

    def append(self, x, t, s, y) -> "MultiSourceDataset":
        return MultiSourceDataset(
            np.vstack([self.X, np.asarray(x, dtype=float).reshape(1, -1)]),
            np.vstack([self.T, np.asarray(t, dtype=int).reshape(1, -1)]),
            np.append(self.S, int(s)),
            np.append(self.y, float(y)),
            self.costs,
            self.levels,
        )

    def select_sources(self, keep: Sequence[int]) -> "MultiSourceDataset":
        """Drop every source not in ``keep`` and renumber the rest in order."""
        keep = list(keep)
        remap = {old: new for new, old in enumerate(keep)}
        rows = np.isin(self.S, keep)
        return MultiSourceDataset(
            self.X[rows],
            self.T[rows],
            np.array([remap[s] for s in self.S[rows]], dtype=int),
            self.y[rows],
            tuple(self.costs[j] for j in keep),
            self.levels,
        )

    def source_rows(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.S == j)


def assemble(per_source_tables, costs, dx: int | None = None, levels=()) -> MultiSourceDataset:
    """Concatenate per-source ``(inputs, responses)`` tables into one dataset.

    Each input table has ``dx + dt`` columns: numeric inputs first, then
    categorical level indices.  Tables may be empty.
    """
    if len(per_source_tables) != len(costs):
        raise ValueError("one cost per source is required")
    levels = tuple(levels)
    dt = len(levels)
    widths = {np.asarray(U).reshape(len(np.asarray(y)), -1).shape[1]
              for U, y in per_source_tables if len(np.asarray(y))}
    if dx is None:
        if len(widths) != 1:
            raise ValueError("cannot infer the column count: tables are ragged or all empty")
        dx = widths.pop() - dt
    elif widths and widths != {dx + dt}:
        raise ValueError(f"every table must have {dx + dt} columns, got {sorted(widths)}")
    Xs, Ts, Ss, ys = [], [], [], []
    for j, (U, y) in enumerate(per_source_tables):
        y = np.asarray(y, dtype=float).reshape(-1)
        U = np.asarray(U, dtype=float).reshape(len(y), dx + dt)
        Xs.append(U[:, :dx])
        Ts.append(U[:, dx:].astype(int))
        Ss.append(np.full(len(y), j, dtype=int))
        ys.append(y)
    return MultiSourceDataset(np.vstack(Xs), np.vstack(Ts), np.concatenate(Ss),
                              np.concatenate(ys), tuple(costs), levels)


def read_table(path, numeric_columns, categorical_columns, response_column,
               source_column, costs=None, levels=None):
    """Load a comma-delimited table with a header row into a dataset.

    Categorical columns may hold arbitrary labels; they are mapped to level
    indices in sorted order of their distinct values.  Source IDs must be
    integers; they are renumbered ``0..ds-1`` in sorted order.

    Returns the dataset and a dict with the label mappings.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = [c for c in (*numeric_columns, *categorical_columns, response_column, source_column)
               if c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    X = np.array([[float(r[c]) for c in numeric_columns] for r in rows]).reshape(len(rows), -1)
    y = np.array([float(r[response_column]) for r in rows])
    raw_sources = [int(r[source_column]) for r in rows]
    source_ids = sorted(set(raw_sources))
    S = np.array([source_ids.index(s) for s in raw_sources], dtype=int)
    cat_maps = {}
    T = np.zeros((len(rows), len(categorical_columns)), dtype=int)
    for k, c in enumerate(categorical_columns):
        labels = sorted({r[c] for r in rows})
        cat_maps[c] = labels
        T[:, k] = [labels.index(r[c]) for r in rows]
    if levels is None:
        levels = tuple(len(cat_maps[c]) for c in categorical_columns)
    if costs is None:
        costs = (1.0,) * len(source_ids)
    ds = MultiSourceDataset(X, T, S, y, tuple(costs), tuple(levels))
    return ds, {"sources": source_ids, "categorical": cat_maps}
