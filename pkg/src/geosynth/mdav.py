"""Fixed-size MDAV clustering of geocodes.

Clusters only serve to split a large file into independent synthesis jobs.
All clusters hold exactly ``k`` records except the last one, which absorbs
the remainder (``k`` to ``2k - 1`` records).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import Dataset
from .spatial import GridIndex, k_smallest, sq_dist


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    assignments: np.ndarray
    k: int

    @property
    def C(self) -> int:
        return int(self.assignments.max()) + 1 if self.assignments.size else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.C)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == c)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["record_index", "cluster_id"])
            for i, c in enumerate(self.assignments):
                w.writerow([i, int(c)])

    @classmethod
    def from_csv(cls, path: str | Path, k: int = 0) -> "ClusterPartition":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        idx = np.array([int(r["record_index"]) for r in rows], dtype=np.int64)
        cl = np.array([int(r["cluster_id"]) for r in rows], dtype=np.int64)
        out = np.empty_like(cl)
        out[idx] = cl
        if not k:
            sizes = np.bincount(out)
            k = int(sizes[:-1].min()) if sizes.size > 1 else int(sizes[0])
        return cls(out, k)


class _ScanSearch:
    """Exhaustive search over the still-unassigned points."""

    def __init__(self, points: np.ndarray):
        self.points = points
        self.remaining = np.arange(points.shape[0])

    def take(self, idx: np.ndarray) -> None:
        keep = np.ones(self.remaining.size, dtype=bool)
        keep[np.searchsorted(self.remaining, idx)] = False
        self.remaining = self.remaining[keep]

    def centroid(self) -> np.ndarray:
        return self.points[self.remaining].mean(axis=0)

    def farthest(self, p: np.ndarray) -> int:
        d = sq_dist(self.points[self.remaining], p)
        return int(self.remaining[np.argmax(d)])

    def k_nearest(self, p: np.ndarray, k: int) -> np.ndarray:
        d = sq_dist(self.points[self.remaining], p)
        return self.remaining[k_smallest(d, k)]


class _GridSearch(_ScanSearch):
    """Same contract; nearest-neighbour queries go through a grid index."""

    def __init__(self, points: np.ndarray, k: int):
        super().__init__(points)
        n = points.shape[0]
        per_cell = max(16, min(k // 4, 4096))
        self.grid = GridIndex(points, target_per_cell=per_cell) if n else None

    def take(self, idx: np.ndarray) -> None:
        super().take(idx)
        self.grid.deactivate(idx)

    def k_nearest(self, p: np.ndarray, k: int) -> np.ndarray:
        return self.grid.k_nearest(p, k)


def mdav_partition(points: np.ndarray, k: int, index: str = "auto") -> ClusterPartition:
    """Partition points into clusters of exactly k (last one k..2k-1).

    ``index`` selects the neighbour search: ``"scan"``, ``"grid"`` or
    ``"auto"`` (grid once n exceeds 50,000). Both give identical output.
    Distance ties are broken by lowest record index.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = points.shape[0]
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    assign = np.full(n, -1, dtype=np.int64)
    if k >= n:
        assign[:] = 0
        return ClusterPartition(assign, k)
    if index == "auto":
        index = "grid" if n > 50_000 else "scan"
    search = _GridSearch(points, k) if index == "grid" else _ScanSearch(points)

    c = 0

    def around(r: int) -> np.ndarray:
        # r plus its k-1 nearest; r may lose a zero-distance tie to a lower-index duplicate
        members = search.k_nearest(points[r], k)
        if r not in members:
            d = sq_dist(points[members], points[r])
            members[np.lexsort((members, d))[-1]] = r
        return members

    def emit(members: np.ndarray) -> None:
        nonlocal c
        assign[members] = c
        search.take(members)
        c += 1

    while search.remaining.size >= 3 * k:
        centroid = search.centroid()
        r = search.farthest(centroid)
        emit(around(r))
        s = search.farthest(points[r])
        emit(around(s))
    if search.remaining.size >= 2 * k:
        centroid = search.centroid()
        r = search.farthest(centroid)
        emit(around(r))
    if search.remaining.size:
        emit(search.remaining.copy())
    return ClusterPartition(assign, k)


def split_dataset(ds: Dataset, part: ClusterPartition) -> list[Dataset]:
    """One dataset per cluster, records kept in original order."""
    if part.assignments.size != ds.n:
        raise ValueError("partition length differs from dataset size")
    return [ds.take(part.members(c)) for c in range(part.C)]
