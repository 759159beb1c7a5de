"""CART synthesizers.

A tree is grown on the original data, each terminal leaf keeps the target
values of the training records routed to it, and synthetic values are drawn
from those leaf stores with Bayesian-bootstrap weights. Several variables
are synthesized in sequence (SRMI): the tree for the l-th target is fitted
on the original values of earlier targets, but records are routed with the
already-synthesized values.

Columns are passed around as a mapping ``name -> 1-D array``. Integer
arrays are treated as categorical, float arrays as continuous.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import (
    GEO_COLUMNS,
    Dataset,
    SyntheticRelease,
    concat_geocode_as_categorical,
)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class CartConfig:
    cp: float = 1e-5
    minsplit: int = 20
    minbucket: int = 7
    max_exhaustive_levels: int = 12

    def __post_init__(self):
        if self.minbucket < 1:
            raise ValueError("minbucket must be >= 1")
        if self.cp < 0:
            raise ValueError("cp must be >= 0")
        if self.minsplit < 1:
            raise ValueError("minsplit must be >= 1")


def column_kind(values: np.ndarray) -> str:
    return CATEGORICAL if np.issubdtype(np.asarray(values).dtype, np.integer) else CONTINUOUS


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("negative count")
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def variance_impurity(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty node")
    dev = values - values.mean()
    return float(np.mean(dev * dev))


# --- split search -----------------------------------------------------------
#
# All searches return the total child impurity n_L*I_L + n_R*I_R of the best
# admissible split (smaller is better) together with a split description.


def _gini_total(counts: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """n * Gini for each row of a count matrix."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = sizes - np.einsum("ij,ij->i", counts, counts) / sizes
    return np.where(sizes > 0, out, np.inf)


def _sse_total(s1: np.ndarray, s2: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        out = s2 - s1 * s1 / sizes
    return np.where(sizes > 0, np.maximum(out, 0.0), np.inf)


class _TargetStats:
    """Per-node sufficient statistics of the target, grouped by an index."""

    def __init__(self, y: np.ndarray, kind: str):
        self.kind = kind
        if kind == CATEGORICAL:
            self.levels, self.codes = np.unique(y, return_inverse=True)
            self.t = self.levels.size
        else:
            self.y = y - y.mean()

    def node_total(self) -> float:
        if self.kind == CATEGORICAL:
            c = np.bincount(self.codes, minlength=self.t).astype(np.float64)
            n = c.sum()
            return float(n - c @ c / n)
        return float(np.sum(self.y * self.y))

    def grouped(self, group: np.ndarray, n_groups: int) -> np.ndarray:
        """Matrix of per-group statistics (counts or [sum, sumsq])."""
        if self.kind == CATEGORICAL:
            flat = group * self.t + self.codes
            return np.bincount(flat, minlength=n_groups * self.t).reshape(n_groups, self.t).astype(np.float64)
        s1 = np.bincount(group, weights=self.y, minlength=n_groups)
        s2 = np.bincount(group, weights=self.y * self.y, minlength=n_groups)
        return np.column_stack([s1, s2])

    def totals(self, stats: np.ndarray, sizes: np.ndarray) -> np.ndarray:
        if self.kind == CATEGORICAL:
            return _gini_total(stats, sizes)
        return _sse_total(stats[:, 0], stats[:, 1], sizes)


def _principal_order(stats: np.ndarray, sizes: np.ndarray, kind: str) -> np.ndarray:
    """Order predictor levels along the first principal coordinate of the
    level-conditional target distribution (the mean, for a continuous target)."""
    if kind == CONTINUOUS:
        score = stats[:, 0] / sizes
    else:
        prof = stats / sizes[:, None]
        centered = prof - np.average(prof, axis=0, weights=sizes)
        weighted = centered * np.sqrt(sizes)[:, None]
        _, _, vt = np.linalg.svd(weighted, full_matrices=False)
        axis = vt[0]
        # fix the sign so the ordering does not depend on the SVD routine
        if axis[np.argmax(np.abs(axis))] < 0:
            axis = -axis
        score = centered @ axis
    return np.lexsort((np.arange(score.size), score))


def _subset_masks(q: int) -> np.ndarray:
    """All binary partitions of q levels, level 0 always on the left."""
    n_splits = 2 ** (q - 1) - 1
    bits = np.arange(n_splits, dtype=np.int64)[:, None]
    rest = ((bits >> np.arange(q - 1)) & 1).astype(bool)
    masks = np.column_stack([np.ones(n_splits, dtype=bool), rest])
    return masks


def _best_categorical_split(x, target: _TargetStats, cfg: CartConfig):
    present, grp = np.unique(x, return_inverse=True)
    q = present.size
    if q < 2:
        return None
    stats = target.grouped(grp, q)
    sizes = np.bincount(grp, minlength=q).astype(np.float64)
    total_stats = stats.sum(axis=0)
    n = sizes.sum()
    best = None
    if q <= cfg.max_exhaustive_levels:
        masks = _subset_masks(q)
        for start in range(0, masks.shape[0], 256):
            block = masks[start : start + 256].astype(np.float64)
            left_stats = block @ stats
            left_n = block @ sizes
            right_n = n - left_n
            score = target.totals(left_stats, left_n) + target.totals(total_stats - left_stats, right_n)
            score = np.where((left_n >= cfg.minbucket) & (right_n >= cfg.minbucket), score, np.inf)
            j = int(np.argmin(score))
            if np.isfinite(score[j]) and (best is None or score[j] < best[0]):
                best = (float(score[j]), masks[start + j])
    else:
        order = _principal_order(stats, sizes, target.kind)
        left_stats = np.cumsum(stats[order], axis=0)[:-1]
        left_n = np.cumsum(sizes[order])[:-1]
        right_n = n - left_n
        score = target.totals(left_stats, left_n) + target.totals(total_stats - left_stats, right_n)
        score = np.where((left_n >= cfg.minbucket) & (right_n >= cfg.minbucket), score, np.inf)
        j = int(np.argmin(score))
        if np.isfinite(score[j]):
            mask = np.zeros(q, dtype=bool)
            mask[order[: j + 1]] = True
            best = (float(score[j]), mask)
    if best is None:
        return None
    score, mask = best
    left = frozenset(int(v) for v in present[mask])
    right = frozenset(int(v) for v in present[~mask])
    return score, dict(left_levels=left, right_levels=right)


def _best_continuous_split(x, target: _TargetStats, cfg: CartConfig):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = xs.size
    # a cut after sorted position j (left = first j+1 records)
    cuts = np.flatnonzero(xs[1:] != xs[:-1])
    if cuts.size == 0:
        return None
    left_n = (cuts + 1).astype(np.float64)
    right_n = n - left_n
    ok = (left_n >= cfg.minbucket) & (right_n >= cfg.minbucket)
    if not ok.any():
        return None
    cuts, left_n, right_n = cuts[ok], left_n[ok], right_n[ok]
    if target.kind == CATEGORICAL:
        onehot_cum = np.zeros((n, target.t))
        onehot_cum[np.arange(n), target.codes[order]] = 1.0
        np.cumsum(onehot_cum, axis=0, out=onehot_cum)
        left_stats = onehot_cum[cuts]
        total = onehot_cum[-1]
        score = _gini_total(left_stats, left_n) + _gini_total(total - left_stats, right_n)
    else:
        ys = target.y[order]
        c1 = np.cumsum(ys)
        c2 = np.cumsum(ys * ys)
        l1, l2 = c1[cuts], c2[cuts]
        score = _sse_total(l1, l2, left_n) + _sse_total(c1[-1] - l1, c2[-1] - l2, right_n)
    j = int(np.argmin(score))
    threshold = (xs[cuts[j]] + xs[cuts[j] + 1]) / 2.0
    return float(score[j]), dict(threshold=float(threshold))


# --- tree ---------------------------------------------------------------------


@dataclass
class Split:
    predictor: str
    threshold: float | None = None
    left_levels: frozenset | None = None
    right_levels: frozenset | None = None
    majority_left: bool = True

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        if self.threshold is not None:
            return values <= self.threshold
        left = np.isin(values, list(self.left_levels))
        unseen = ~left & ~np.isin(values, list(self.right_levels))
        return left | (unseen & self.majority_left)

    def describe(self) -> str:
        if self.threshold is not None:
            return f"{self.predictor} <= {self.threshold!r}"
        return f"{self.predictor} in {sorted(self.left_levels)}"


@dataclass
class Node:
    n: int
    impurity: float
    split: Split | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    leaf_id: int = -1
    improvement: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass
class CartTree:
    root: Node
    target: str
    target_kind: str
    predictors: tuple[str, ...]
    leaf_values: list[np.ndarray] = field(default_factory=list)
    leaf_members: list[np.ndarray] = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_values)

    def apply(self, frame: Mapping[str, np.ndarray]) -> np.ndarray:
        """Terminal-leaf id of every record in ``frame``."""
        n = len(next(iter(frame.values()))) if frame else 0
        out = np.full(n, -1, dtype=np.int64)
        stack = [(self.root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.leaf_id
                continue
            go_left = node.split.goes_left(np.asarray(frame[node.split.predictor])[idx])
            stack.append((node.right, idx[~go_left]))
            stack.append((node.left, idx[go_left]))
        return out

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def draw(self, leaf_ids: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One synthetic column: per leaf, a fresh Bayesian-bootstrap weighting."""
        first = self.leaf_values[0]
        out = np.empty(leaf_ids.size, dtype=first.dtype)
        order = np.argsort(leaf_ids, kind="stable")
        bounds = np.searchsorted(leaf_ids[order], np.arange(self.n_leaves + 1))
        for w in range(self.n_leaves):
            members = order[bounds[w] : bounds[w + 1]]
            if members.size:
                out[members] = bayesian_bootstrap_draw(self.leaf_values[w], members.size, rng)
        return out

    def dump(self) -> str:
        lines = []

        def walk(node: Node, depth: int, label: str) -> None:
            pad = "  " * depth
            if node.is_leaf:
                lines.append(f"{pad}{label}leaf {node.leaf_id}: n={node.n} impurity={node.impurity:.6g}")
                return
            lines.append(f"{pad}{label}n={node.n} impurity={node.impurity:.6g} split {node.split.describe()}")
            walk(node.left, depth + 1, "L ")
            walk(node.right, depth + 1, "R ")

        walk(self.root, 0, "")
        return "\n".join(lines) + "\n"

    def write_leaf_membership(self, path: str | Path, frame: Mapping[str, np.ndarray]) -> None:
        leaves = self.apply(frame)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["record_index", "leaf_id"])
            w.writerows((i, int(v)) for i, v in enumerate(leaves))


def fit_tree(
    frame: Mapping[str, np.ndarray],
    target: str,
    predictors: Sequence[str],
    cfg: CartConfig = CartConfig(),
) -> CartTree:
    y = np.asarray(frame[target])
    kind = column_kind(y)
    predictors = tuple(p for p in predictors if p != target)
    cols = {p: np.asarray(frame[p]) for p in predictors}
    n = y.size
    if n == 0:
        raise ValueError("cannot fit a tree on zero records")

    root_total = _TargetStats(y, kind).node_total()
    threshold = cfg.cp * root_total
    tree = CartTree(Node(n, root_total / n), target, kind, predictors)

    def grow(node: Node, idx: np.ndarray) -> None:
        stats = _TargetStats(y[idx], kind)
        node_total = stats.node_total()
        node.impurity = node_total / idx.size
        best = None
        if idx.size >= cfg.minsplit and idx.size >= 2 * cfg.minbucket and node_total > 0:
            for p in predictors:
                x = cols[p][idx]
                found = (
                    _best_categorical_split(x, stats, cfg)
                    if column_kind(x) == CATEGORICAL
                    else _best_continuous_split(x, stats, cfg)
                )
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], Split(p, **found[1]))
        if best is not None:
            gain = node_total - best[0]
            if gain > 1e-12 * max(node_total, 1.0) and gain >= threshold:
                split = best[1]
                go_left = split.goes_left(cols[split.predictor][idx])
                split.majority_left = int(go_left.sum()) >= int((~go_left).sum())
                node.split = split
                node.improvement = gain
                node.left = Node(int(go_left.sum()), 0.0)
                node.right = Node(int((~go_left).sum()), 0.0)
                grow(node.left, idx[go_left])
                grow(node.right, idx[~go_left])
                return
        node.leaf_id = len(tree.leaf_values)
        tree.leaf_values.append(y[idx].copy())
        tree.leaf_members.append(idx)

    grow(tree.root, np.arange(n))
    return tree


# --- Bayesian bootstrap -------------------------------------------------------


def bayesian_bootstrap_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Gaps between sorted uniforms: a Dirichlet(1, ..., 1) draw of length n."""
    u = np.sort(rng.random(n - 1))
    return np.diff(np.concatenate(([0.0], u, [1.0])))


def bayesian_bootstrap_draw(values, count: int, rng: np.random.Generator) -> np.ndarray:
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("empty leaf")
    if values.size == 1:
        return np.repeat(values, count)
    cuts = np.sort(rng.random(values.size - 1))
    # value j owns the interval (cuts[j-1], cuts[j]] of the unit line
    idx = np.searchsorted(cuts, rng.random(count), side="left")
    return values[idx]


# --- synthesis ----------------------------------------------------------------


def synthesize_variable(
    frame: Mapping[str, np.ndarray],
    target: str,
    predictors: Sequence[str],
    cfg: CartConfig,
    m: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """m replacement columns for ``target``; predictors are left unaltered."""
    return [rep[target] for rep in srmi_frame(frame, [target], cfg, m, rng, predictors)]


def srmi_frame(
    frame: Mapping[str, np.ndarray],
    ordered_targets: Sequence[str],
    cfg: CartConfig,
    m: int,
    rng: np.random.Generator,
    predictors: Sequence[str] | None = None,
    trees_out: list | None = None,
) -> list[dict[str, np.ndarray]]:
    """Sequential CART synthesis over plain columns.

    Returns, per replicate, the synthetic value of every target.
    """
    ordered_targets = list(ordered_targets)
    if not ordered_targets:
        raise ValueError("no synthesis targets")
    if predictors is None:
        predictors = [c for c in frame if c not in ordered_targets]
    base = [p for p in predictors if p not in ordered_targets]
    trees = [fit_tree(frame, t, base + ordered_targets[:l], cfg) for l, t in enumerate(ordered_targets)]
    if trees_out is not None:
        trees_out.extend(trees)
    out = []
    for rep_rng in rng.spawn(m):
        current = dict(frame)
        for tree in trees:
            current[tree.target] = tree.draw(tree.apply(current), rep_rng)
        out.append({t: current[t] for t in ordered_targets})
    return out


def _frame_for(ds: Dataset, geo_mode: str, geo_targeted: bool):
    """Columns used for synthesis plus an optional geocode codebook."""
    if ds.schema.geocode is not None and geo_targeted and geo_mode == CATEGORICAL:
        enc, book = concat_geocode_as_categorical(ds)
        return enc.frame(), book
    return ds.frame(), None


def srmi_synthesize(
    ds: Dataset,
    ordered_targets: Sequence[str],
    cfg: CartConfig,
    m: int,
    rng: np.random.Generator,
    geo_mode: str = CATEGORICAL,
    predictors: Sequence[str] | None = None,
    geo_order: Sequence[str] = GEO_COLUMNS,
    trees_out: list | None = None,
) -> SyntheticRelease:
    """Synthesize schema variables in order; the geocode is either one
    categorical variable (``geo_mode="categorical"``) or two continuous
    coordinates synthesized in ``geo_order``."""
    geo_var = ds.schema.geocode
    geo_name = geo_var.name if geo_var is not None else None
    geo_targeted = geo_name in ordered_targets
    frame, book = _frame_for(ds, geo_mode, geo_targeted)

    columns: list[str] = []
    for t in ordered_targets:
        if t == geo_name and geo_mode == CONTINUOUS:
            columns.extend(geo_order)
        else:
            columns.append(t)
    if predictors is not None:
        expanded = []
        for p in predictors:
            if p == geo_name and book is None:
                expanded.extend(GEO_COLUMNS)
            else:
                expanded.append(p)
        predictors = expanded

    draws = srmi_frame(frame, columns, cfg, m, rng, predictors, trees_out)
    replicates = []
    for rep in draws:
        cat_cols = {t: rep[t] for t in ordered_targets if t != geo_name}
        geo = None
        if geo_targeted:
            if book is not None:
                geo = book.decode(rep[geo_name])
            else:
                geo = np.column_stack([rep[GEO_COLUMNS[0]], rep[GEO_COLUMNS[1]]])
        replicates.append(ds.with_columns(cat_cols, geo))
    return SyntheticRelease(replicates, tuple(ordered_targets))


def synthesize_geocode_categorical(
    ds: Dataset,
    predictors: Sequence[str] | None,
    cfg: CartConfig,
    m: int,
    rng: np.random.Generator,
) -> SyntheticRelease:
    return srmi_synthesize(ds, [ds.schema.geocode.name], cfg, m, rng, CATEGORICAL, predictors)


def synthesize_geocode_continuous(
    ds: Dataset,
    predictors: Sequence[str] | None,
    cfg: CartConfig,
    m: int,
    rng: np.random.Generator,
    geo_order: Sequence[str] = GEO_COLUMNS,
) -> SyntheticRelease:
    return srmi_synthesize(ds, [ds.schema.geocode.name], cfg, m, rng, CONTINUOUS, predictors, geo_order)

