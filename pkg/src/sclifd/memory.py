"""Fixed-capacity exemplar buffer and the two prioritised selectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from sclifd import kernels
from sclifd.errors import DataError


class Exemplar(NamedTuple):
    index: int             # row in the source dataset
    features: np.ndarray   # raw input features
    ratio: float | None    # majority ratio when chosen by AdaHerding


@dataclass
class MemoryBuffer:
    capacity: int
    per_class: dict[int, list[Exemplar]] = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("buffer capacity must be positive")

    def __len__(self):
        return sum(len(v) for v in self.per_class.values())

    def audit(self) -> dict:
        """JSON-ready record of what is stored, for the run manifest."""
        return {
            str(c): {
                "indices": [e.index for e in exs],
                "ratios": [e.ratio for e in exs],
            }
            for c, exs in sorted(self.per_class.items())
        }


def per_class_quota(capacity: int, t_seen: int) -> int:
    """``floor(K / t)``; spare slots are left empty."""
    if t_seen < 1:
        raise ValueError("t_seen must be >= 1")
    return capacity // t_seen


def herding_select(features, m: int) -> list[int]:
    """Greedy herding order: each pick brings the running exemplar mean
    closest to the full mean.  Lowest index wins ties; picks never repeat."""
    f = np.ascontiguousarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise DataError("herding needs a non-empty (n, e) feature matrix")
    if m < 1:
        raise ValueError("m must be >= 1")
    return [int(i) for i in kernels.herding_order(f, int(m))]


def majority_ratios(context, labels, query_rows, n_neighbors: int) -> np.ndarray:
    """Fraction of other-label points among each query's ``n_neighbors``
    nearest context points (Euclidean, query excluded, lower row wins ties)."""
    ctx = np.ascontiguousarray(context, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    query_rows = np.ascontiguousarray(query_rows, dtype=np.int64)
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be >= 1")
    if ctx.shape[0] < n_neighbors + 1:
        raise DataError(f"context has {ctx.shape[0]} points; need more than n_neighbors={n_neighbors}")
    counts = kernels.majority_counts(ctx, labels, query_rows, int(n_neighbors))
    return counts / n_neighbors


def adaherding_select(context, labels, query_rows, n_neighbors: int, m: int):
    """Rank one class's samples by majority ratio, hardest first.

    ``query_rows`` are the rows of ``context`` holding the class being
    selected.  Returns ``(order, ratios)``: ``order`` indexes into
    ``query_rows`` (length ``min(m, t)``), ``ratios`` holds every sample's
    ratio in ``query_rows`` order.  Ties keep the original order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    ratios = majority_ratios(context, labels, query_rows, n_neighbors)
    # counts are integers, so sort on them to avoid float ties
    counts = np.rint(ratios * n_neighbors).astype(np.int64)
    order = np.lexsort((np.arange(len(counts)), -counts))[:m]
    return [int(i) for i in order], ratios


def random_select(n: int, m: int, rng) -> list[int]:
    """Uniform random priority order; sanity baseline only."""
    return [int(i) for i in rng.permutation(n)[:m]]


def rebalance(buffer: MemoryBuffer, t_seen: int) -> MemoryBuffer:
    """Truncate every class list to ``floor(K / t_seen)`` keeping priority order."""
    m = per_class_quota(buffer.capacity, t_seen)
    return MemoryBuffer(buffer.capacity, {c: list(v[:m]) for c, v in buffer.per_class.items()})


def buffer_flatten(buffer: MemoryBuffer) -> list[tuple[Exemplar, int]]:
    """Ascending class id, then priority order."""
    return [(e, c) for c in sorted(buffer.per_class) for e in buffer.per_class[c]]


def buffer_arrays(buffer: MemoryBuffer, d: int):
    """Stored exemplars as ``(X, y, dataset_rows)`` arrays in flatten order."""
    flat = buffer_flatten(buffer)
    if not flat:
        return np.empty((0, d)), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    X = np.stack([e.features for e, _ in flat])
    y = np.array([c for _, c in flat], dtype=np.int64)
    rows = np.array([e.index for e, _ in flat], dtype=np.int64)
    return X, y, rows
