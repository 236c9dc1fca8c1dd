"""Trace and aggregate data structures plus dataset plumbing.

A trace is a binary site x epoch presence matrix for one individual.
Aggregates are cellwise sums of traces; noisy aggregates carry the
mechanism that perturbed them.  All containers are immutable after
construction and every stochastic operation takes an explicit seed or
numpy Generator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, a Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TraceMatrix:
    """Binary L x E presence matrix for one individual."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("trace must be a non-empty 2-D matrix")
        if not np.isin(cells, (0, 1)).all():
            raise ValueError("trace cells must be 0 or 1")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.uint8)))

    @property
    def sites(self) -> int:
        return self.cells.shape[0]

    @property
    def epochs(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def n_positive(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class TraceDataset:
    """Ordered, dimension-homogeneous collection of traces."""

    traces: tuple[TraceMatrix, ...]

    def __post_init__(self):
        traces = tuple(self.traces)
        if not traces:
            raise ValueError("dataset must contain at least one trace")
        shape = traces[0].shape
        for i, t in enumerate(traces):
            if t.shape != shape:
                raise ValueError(
                    f"trace {i} has shape {t.shape}, expected {shape}"
                )
        object.__setattr__(self, "traces", traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __getitem__(self, i: int) -> TraceMatrix:
        return self.traces[i]

    @property
    def shape(self) -> tuple[int, int]:
        return self.traces[0].shape

    def stacked(self) -> np.ndarray:
        """All traces as one (n, L, E) array."""
        return np.stack([t.cells for t in self.traces])

    def cell_rates(self) -> np.ndarray:
        """Empirical per-cell one-fraction over the dataset."""
        return self.stacked().mean(axis=0)


@dataclass(frozen=True)
class AggregateMatrix:
    """Non-negative integer L x E matrix: cellwise sum of traces."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("aggregate must be a non-empty 2-D matrix")
        if (cells < 0).any():
            raise ValueError("aggregate cells must be non-negative")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.int64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


@dataclass(frozen=True)
class NoisyAggregate:
    """Real-valued L x E matrix after DP perturbation."""

    cells: np.ndarray
    mechanism: object = None  # MechanismSpec; untyped to avoid an import cycle

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("noisy aggregate must be a non-empty 2-D matrix")
        object.__setattr__(self, "cells", _frozen(cells))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


@dataclass(frozen=True)
class ObservationVector:
    """Aggregate values at the target's positive cells, row-major order."""

    values: np.ndarray
    cell_indices: tuple[tuple[int, int], ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        idx = tuple((int(l), int(e)) for l, e in self.cell_indices)
        if len(idx) != len(set(idx)):
            raise ValueError("duplicate cell indices")
        if values.shape != (len(idx),):
            raise ValueError("values and cell_indices length mismatch")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "cell_indices", idx)

    def __len__(self) -> int:
        return len(self.values)


def positive_cells(z: TraceMatrix) -> tuple[tuple[int, int], ...]:
    """Row-major (site, epoch) index pairs where the target trace is 1."""
    rows, cols = np.nonzero(z.cells)
    return tuple((int(l), int(e)) for l, e in zip(rows, cols))


def clip_trace(trace: TraceMatrix, C: int, seed=None) -> TraceMatrix:
    """Cap each epoch (column) of a trace at C ones.

    Ones beyond the cap are removed uniformly at random within the column;
    columns already within the bound are untouched.
    """
    if C < 1:
        raise ValueError("clip bound C must be >= 1")
    rng = as_rng(seed)
    cells = np.array(trace.cells, copy=True)
    for e in range(cells.shape[1]):
        ones = np.nonzero(cells[:, e])[0]
        excess = len(ones) - C
        if excess > 0:
            drop = rng.choice(ones, size=excess, replace=False)
            cells[drop, e] = 0
    return TraceMatrix(cells)


def aggregate(dataset: TraceDataset) -> AggregateMatrix:
    """Cellwise sum of all traces in the dataset."""
    total = np.zeros(dataset.shape, dtype=np.int64)
    for t in dataset.traces:
        total += t.cells
    return AggregateMatrix(total)


def generate_synthetic_traces(rates: np.ndarray, n: int, seed=None) -> TraceDataset:
    """Draw n traces with independent Bernoulli(rate) cells."""
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 2 or rates.size == 0:
        raise ValueError("rates must be a non-empty 2-D matrix")
    if (rates < 0).any() or (rates > 1).any():
        raise ValueError("rates must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    draws = rng.random((n, *rates.shape)) < rates
    return TraceDataset(tuple(TraceMatrix(d) for d in draws.astype(np.uint8)))


def ingest_traces_csv(path, sites: int, epochs: int) -> TraceDataset:
    """Read traces from CSV: header ``id,cell_0,...``, cells flattened row-major."""
    n_cells = sites * epochs
    traces = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: no traces (empty file)") from None
        if len(header) != n_cells + 1 or header[0] != "id":
            raise ValueError(
                f"{path}:1: expected header 'id,cell_0,...,cell_{n_cells - 1}' "
                f"({n_cells + 1} columns), got {len(header)} columns"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cells + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {n_cells + 1} columns, got {len(row)}"
                )
            flat = np.empty(n_cells, dtype=np.uint8)
            for j, v in enumerate(row[1:]):
                if v == "0":
                    flat[j] = 0
                elif v == "1":
                    flat[j] = 1
                else:
                    raise ValueError(
                        f"{path}:{lineno}: non-binary value {v!r} in column {j + 1}"
                    )
            traces.append(TraceMatrix(flat.reshape(sites, epochs)))
    if not traces:
        raise ValueError(f"{path}: no traces")
    return TraceDataset(tuple(traces))


def write_traces_csv(dataset: TraceDataset, path) -> None:
    """Write a dataset in the format read by :func:`ingest_traces_csv`."""
    sites, epochs = dataset.shape
    n_cells = sites * epochs
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"cell_{j}" for j in range(n_cells)])
        for i, t in enumerate(dataset.traces):
            writer.writerow([i] + t.cells.reshape(-1).tolist())


def split_dataset(
    dataset: TraceDataset, fractions: Sequence[float], seed=None
) -> list[TraceDataset]:
    """Shuffle and partition a dataset into parts proportional to ``fractions``.

    Sizes are floored and remainders go to the earliest parts, so the split
    is deterministic given the seed.
    """
    fractions = list(fractions)
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(dataset)
    if len(fractions) > n:
        raise ValueError("more parts than traces")
    sizes = [int(np.floor(f * n)) for f in fractions]
    remainder = n - sum(sizes)
    for i in range(remainder):
        sizes[i % len(sizes)] += 1
    if 0 in sizes:
        raise ValueError("dataset too small: a split part would be empty")
    rng = as_rng(seed)
    perm = rng.permutation(n)
    parts = []
    start = 0
    for size in sizes:
        idx = perm[start : start + size]
        parts.append(TraceDataset(tuple(dataset.traces[i] for i in idx)))
        start += size
    return parts


def positive_observations(agg: NoisyAggregate, z: TraceMatrix) -> ObservationVector:
    """Values of the noisy aggregate at exactly the target's positive cells."""
    if agg.shape != z.shape:
        raise ValueError(f"shape mismatch: aggregate {agg.shape} vs trace {z.shape}")
    idx = positive_cells(z)
    values = np.array([agg.cells[l, e] for l, e in idx])
    return ObservationVector(values, idx)
