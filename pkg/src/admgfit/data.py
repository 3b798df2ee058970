"""Binary datasets: CSV input and output, aggregation, simulation.

A dataset is a table of 0/1 rows over named variables with a
multiplicity per row.  On disk it is a CSV file with a header of
variable names and an optional trailing ``count`` column; rows without
one count once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import Admg
from .moebius import prob_vector

__all__ = ["Dataset", "load_data", "save_data", "simulate", "counts_for"]


@dataclass(frozen=True)
class Dataset:
    """Aggregated binary observations.

    ``states`` has one 0/1 row per distinct observed pattern in the
    order first seen; ``counts`` are the matching multiplicities.
    """

    names: tuple[str, ...]
    states: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @staticmethod
    def from_rows(names: Sequence[str], rows: Iterable[Sequence[int]]) -> "Dataset":
        seen: dict[tuple, int] = {}
        for row in rows:
            key = tuple(int(b) for b in row)
            seen[key] = seen.get(key, 0) + 1
        states = np.array(list(seen.keys()), dtype=np.int8).reshape(len(seen), len(names))
        counts = np.array(list(seen.values()), dtype=np.int64)
        return Dataset(tuple(names), states, counts)

    def count_vector(self, order: Sequence | None = None) -> np.ndarray:
        """Counts of all 2^k joint states in canonical row order.

        ``order`` reorders variables (default: the dataset's own column
        order); it must name every column exactly once.
        """
        if order is None:
            cols = list(range(len(self.names)))
        else:
            order = [str(v) for v in order]
            if sorted(order) != sorted(self.names):
                raise ValueError(
                    f"variables {order!r} do not match dataset columns {self.names!r}"
                )
            cols = [self.names.index(v) for v in order]
        k = len(cols)
        out = np.zeros(1 << k, dtype=np.int64)
        weights = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
        idx = self.states[:, cols].astype(np.int64) @ weights
        np.add.at(out, idx, self.counts)
        return out


def counts_for(g: Admg, ds: Dataset) -> np.ndarray:
    """Count vector of a dataset in the graph's canonical state order."""
    return ds.count_vector([str(v) for v in g.vertices])


def load_data(path) -> Dataset:
    """Read a CSV of 0/1 columns with an optional ``count`` column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_count = bool(header) and header[-1].lower() == "count"
        names = header[:-1] if has_count else header
        if not names:
            raise ValueError(f"{path}: no variable columns")
        if len(set(names)) != len(names):
            raise ValueError(f"{path}: duplicate column names")
        states: list[tuple] = []
        counts: list[int] = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                vals = [int(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer value") from None
            c = vals.pop() if has_count else 1
            if c < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            if any(v not in (0, 1) for v in vals):
                raise ValueError(f"{path}:{lineno}: values must be 0 or 1")
            states.append(tuple(vals))
            counts.append(c)
    agg: dict[tuple, int] = {}
    for s, c in zip(states, counts):
        agg[s] = agg.get(s, 0) + c
    return Dataset(
        tuple(names),
        np.array(list(agg.keys()), dtype=np.int8).reshape(len(agg), len(names)),
        np.array(list(agg.values()), dtype=np.int64),
    )


def save_data(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.names) + ["count"])
        for row, c in zip(ds.states, ds.counts):
            writer.writerow([int(b) for b in row] + [int(c)])


def simulate(g: Admg, q: np.ndarray, n: int, seed: int | None = None) -> Dataset:
    """Draw ``n`` observations from the model distribution at ``q``.

    Sampling inverts the cumulative distribution over the 2^|V| joint
    states, so a seed fixes the draw exactly.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    p = prob_vector(g, q)
    if p.min() < -1e-9:
        raise ValueError("parameters lie outside the model (negative probability)")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    cum = np.cumsum(p)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(n), side="right")
    cells = np.bincount(idx, minlength=len(p))
    k = len(g.vertices)
    nz = np.flatnonzero(cells)
    states = (nz[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return Dataset(
        tuple(str(v) for v in g.vertices),
        states.astype(np.int8),
        cells[nz].astype(np.int64),
    )
