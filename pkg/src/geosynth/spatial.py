"""Uniform-grid bucketing of 2-D points.

Every query computes exact squared Euclidean distances on the candidate
points, so results agree bit-for-bit with an exhaustive scan; the grid only
prunes which points are looked at.
"""
from __future__ import annotations

import math

import numpy as np


def sq_dist(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    dx = points[:, 0] - p[0]
    dy = points[:, 1] - p[1]
    return dx * dx + dy * dy


def k_smallest(d: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest values, ties broken by lowest position.

    Returned in ascending position order.
    """
    n = d.size
    if k >= n:
        return np.arange(n)
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    kth = np.partition(d, k - 1)[k - 1]
    below = np.flatnonzero(d < kth)
    ties = np.flatnonzero(d == kth)[: k - below.size]
    return np.sort(np.concatenate([below, ties]))


class GridIndex:
    """Points bucketed into square cells of side ``cell``.

    Supports deactivating points (used by MDAV as records get assigned).
    """

    def __init__(self, points: np.ndarray, cell: float | None = None, target_per_cell: int = 32):
        self.points = np.asarray(points, dtype=np.float64)
        n = self.points.shape[0]
        if n == 0:
            raise ValueError("empty point set")
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        if cell is None:
            area = max(float(np.prod(hi - lo)), 1.0)
            cell = math.sqrt(area * target_per_cell / n)
            cell = max(cell, 1e-9)
        self.cell = float(cell)
        self.origin = lo
        ij = np.floor((self.points - lo) / self.cell).astype(np.int64)
        self.shape = (int(ij[:, 0].max()) + 1, int(ij[:, 1].max()) + 1)
        flat = ij[:, 0] * self.shape[1] + ij[:, 1]
        self.order = np.argsort(flat, kind="stable")
        n_cells = self.shape[0] * self.shape[1]
        self.starts = np.searchsorted(flat[self.order], np.arange(n_cells + 1))
        self.cell_of = ij
        self.active = np.ones(n, dtype=bool)
        self.active_count = np.diff(self.starts).astype(np.int64)
        self.n_active = n

    def deactivate(self, idx: np.ndarray) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        idx = idx[self.active[idx]]
        self.active[idx] = False
        flat = self.cell_of[idx, 0] * self.shape[1] + self.cell_of[idx, 1]
        np.subtract.at(self.active_count, flat, 1)
        self.n_active -= idx.size

    def _cell_range(self, p: np.ndarray, radius: float) -> tuple[int, int, int, int]:
        lo = np.floor((p - radius - self.origin) / self.cell).astype(np.int64)
        hi = np.floor((p + radius - self.origin) / self.cell).astype(np.int64)
        i0, j0 = max(int(lo[0]), 0), max(int(lo[1]), 0)
        i1, j1 = min(int(hi[0]), self.shape[0] - 1), min(int(hi[1]), self.shape[1] - 1)
        return i0, i1, j0, j1

    def _gather(self, i0: int, i1: int, j0: int, j1: int, active_only: bool) -> np.ndarray:
        if i0 > i1 or j0 > j1:
            return np.zeros(0, dtype=np.int64)
        chunks = []
        w = self.shape[1]
        for i in range(i0, i1 + 1):
            a = self.starts[i * w + j0]
            b = self.starts[i * w + j1 + 1]
            if b > a:
                chunks.append(self.order[a:b])
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        idx = np.sort(np.concatenate(chunks))
        if active_only:
            idx = idx[self.active[idx]]
        return idx

    def _count(self, i0: int, i1: int, j0: int, j1: int) -> int:
        if i0 > i1 or j0 > j1:
            return 0
        block = self.active_count.reshape(self.shape)[i0 : i1 + 1, j0 : j1 + 1]
        return int(block.sum())

    def within(self, p, r: float, active_only: bool = False) -> np.ndarray:
        """Indices (ascending) with squared distance to p at most r*r."""
        p = np.asarray(p, dtype=np.float64)
        cand = self._gather(*self._cell_range(p, r), active_only)
        return cand[sq_dist(self.points[cand], p) <= r * r]

    def k_nearest(self, p, k: int) -> np.ndarray:
        """k nearest active points to p, ties to lowest index, ascending order."""
        p = np.asarray(p, dtype=np.float64)
        k = min(k, self.n_active)
        if k <= 0:
            return np.zeros(0, dtype=np.int64)
        # grow a square window until it holds k active points
        radius = self.cell
        span = float(np.max(self.points.max(axis=0) - self.points.min(axis=0))) + self.cell
        while self._count(*self._cell_range(p, radius)) < k and radius < 2 * span:
            radius *= 2
        cand = self._gather(*self._cell_range(p, radius), True)
        d = sq_dist(self.points[cand], p)
        # the k-th distance among window points bounds the true k-th distance
        kth = np.partition(d, k - 1)[k - 1]
        reach = math.sqrt(kth) * (1 + 1e-12) + 1e-9
        cand = self._gather(*self._cell_range(p, reach), True)
        d = sq_dist(self.points[cand], p)
        return cand[k_smallest(d, k)]

    def nearest(self, p) -> int:
        """Nearest point (active or not), ties to lowest index."""
        return int(self._nearest_all(np.asarray(p, dtype=np.float64)))

    def _nearest_all(self, p: np.ndarray) -> int:
        radius = self.cell
        span = float(np.max(self.points.max(axis=0) - self.points.min(axis=0))) + self.cell
        while True:
            cand = self._gather(*self._cell_range(p, radius), False)
            if cand.size or radius > 4 * span + np.max(np.abs(p - self.origin)):
                break
            radius *= 2
        if cand.size == 0:
            d = sq_dist(self.points, p)
            return int(np.argmin(d))
        d = sq_dist(self.points[cand], p)
        reach = math.sqrt(d.min()) * (1 + 1e-12) + 1e-9
        cand = self._gather(*self._cell_range(p, reach), False)
        d = sq_dist(self.points[cand], p)
        return int(cand[np.argmin(d)])
