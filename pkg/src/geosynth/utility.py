"""Analytical-validity measures: regional shares, the UL measure over
interaction tables, and multitype K/L functions."""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .data_model import Dataset, SyntheticRelease
from .spatial import GridIndex, sq_dist


# --- regions ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegionMap:
    """Assigns geocodes to regions: nearest center (Voronoi cells, ties to
    the first center) or square tiles of side ``tile`` meters."""

    centers: np.ndarray | None = None
    ids: tuple[str, ...] = ()
    tile: float | None = None

    def __post_init__(self):
        if (self.centers is None) == (self.tile is None):
            raise ValueError("give either centers or a tile size")
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
            object.__setattr__(self, "centers", c)
            if not self.ids:
                object.__setattr__(self, "ids", tuple(str(i) for i in range(c.shape[0])))
            if len(self.ids) != c.shape[0]:
                raise ValueError("one id per center required")
        elif self.tile <= 0:
            raise ValueError("tile size must be positive")

    def assign(self, geo: np.ndarray) -> np.ndarray:
        geo = np.asarray(geo, dtype=np.float64).reshape(-1, 2)
        if self.tile is not None:
            cells = np.floor(geo / self.tile).astype(np.int64)
            return np.array([f"{a}:{b}" for a, b in cells.tolist()], dtype=object)
        best = np.zeros(geo.shape[0], dtype=np.int64)
        best_d = sq_dist(geo, self.centers[0])
        for j in range(1, self.centers.shape[0]):
            d = sq_dist(geo, self.centers[j])
            closer = d < best_d
            best[closer] = j
            best_d = np.where(closer, d, best_d)
        return np.array(self.ids, dtype=object)[best]

    @classmethod
    def from_csv(cls, path: str | Path) -> "RegionMap":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([[float(r["x"]), float(r["y"])] for r in rows]), tuple(r["region"] for r in rows))

    def to_csv(self, path: str | Path) -> None:
        if self.centers is None:
            raise ValueError("tile maps have no centers to write")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "x", "y"])
            for rid, (x, y) in zip(self.ids, self.centers.tolist()):
                w.writerow([rid, repr(x), repr(y)])


def nearest_original(query: np.ndarray, orig: np.ndarray) -> np.ndarray:
    """Index of the nearest original point, ties to the lowest index."""
    orig = np.ascontiguousarray(orig, dtype=np.float64)
    keys = orig.view(np.dtype((np.void, 16))).ravel()
    _, first = np.unique(keys, return_index=True)
    first = np.sort(first)
    uniq = orig[first]
    query = np.asarray(query, dtype=np.float64).reshape(-1, 2)
    if uniq.shape[0] == 1:
        return np.zeros(query.shape[0], dtype=np.int64) + first[0]
    k = min(4, uniq.shape[0])
    tree = cKDTree(uniq)
    _, cand = tree.query(query, k=k)
    d = np.empty(cand.shape)
    for j in range(k):
        diff = uniq[cand[:, j]] - query
        d[:, j] = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
    dmin = d.min(axis=1)
    tie = d == dmin[:, None]
    # candidate indices into `uniq` are ordered like original indices
    masked = np.where(tie, cand, np.iinfo(np.int64).max)
    out = masked.min(axis=1)
    for i in np.flatnonzero(tie[:, -1]):
        # every returned neighbour ties: widen the search exactly
        near = np.array(tree.query_ball_point(query[i], math.sqrt(dmin[i]) * (1 + 1e-9) + 1e-9))
        dd = sq_dist(uniq[near], query[i])
        out[i] = near[dd == dd.min()].min()
    return first[out]


def assign_regions(syn: Dataset, orig: Dataset, region_of_orig: np.ndarray) -> np.ndarray:
    """Region of the Euclidean-nearest original geocode for each synthetic record."""
    if orig.n == 0:
        raise ValueError("original dataset is empty")
    return np.asarray(region_of_orig, dtype=object)[nearest_original(syn.geo, orig.geo)]


def region_shares(regions: np.ndarray, flags: np.ndarray) -> dict:
    """Per region, the fraction of records with ``flags`` set."""
    regions = np.asarray(regions, dtype=object)
    flags = np.asarray(flags, dtype=bool)
    labels, inv = np.unique(regions, return_inverse=True)
    counts = np.bincount(inv, minlength=labels.size)
    hits = np.bincount(inv, weights=flags, minlength=labels.size)
    return {lab: float(h / c) for lab, h, c in zip(labels.tolist(), hits, counts) if c > 0}


# --- interaction tables and UL -------------------------------------------------


@dataclass
class InteractionTables:
    """Relative frequencies per region for every ``level``-subset of variables.

    ``tables[j]`` has shape (n_regions, n_cells) for ``subsets[j]``; a
    region without records gets an all-zero row.
    """

    level: int
    regions: list
    subsets: list[tuple[str, ...]]
    tables: list[np.ndarray]
    region_counts: np.ndarray

    def layout(self):
        return (self.level, list(self.regions), list(self.subsets), [t.shape for t in self.tables])


def interaction_tables(
    ds: Dataset,
    regions: np.ndarray,
    level: int,
    variables: Sequence[str] | None = None,
    region_set: Sequence | None = None,
) -> InteractionTables:
    variables = list(variables or ds.schema.categorical_names)
    if not 1 <= level <= len(variables):
        raise ValueError(f"level {level} needs at least {level} categorical variables")
    regions = np.asarray(regions, dtype=object)
    region_set = sorted(set(regions.tolist())) if region_set is None else list(region_set)
    pos = {r: i for i, r in enumerate(region_set)}
    rix = np.array([pos.get(r, -1) for r in regions.tolist()], dtype=np.int64)
    keep = rix >= 0
    rix = rix[keep]
    R = len(region_set)
    totals = np.bincount(rix, minlength=R).astype(np.float64)
    subsets, tables = [], []
    for subset in itertools.combinations(variables, level):
        dims = [ds.schema.variable(v).d for v in subset]
        cell = np.zeros(int(keep.sum()), dtype=np.int64)
        for v, dv in zip(subset, dims):
            cell = cell * dv + (ds.column(v)[keep] - 1)
        n_cells = int(np.prod(dims))
        counts = np.bincount(rix * n_cells + cell, minlength=R * n_cells).reshape(R, n_cells).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(totals[:, None] > 0, counts / totals[:, None], 0.0)
        subsets.append(subset)
        tables.append(rel)
    return InteractionTables(level, region_set, subsets, tables, totals)


@dataclass
class ULResult:
    level: int
    ul: float
    differences: np.ndarray


def ul_measure(
    orig: InteractionTables,
    syn: Sequence[InteractionTables],
    weighted: bool = False,
) -> ULResult:
    """Mean absolute difference of relative frequencies.

    Synthetic frequencies are averaged over replicates before differencing.
    With ``weighted`` each region's cells count proportionally to its
    original record count instead of equally.
    """
    if not syn:
        raise ValueError("no synthetic tables")
    for s in syn:
        if s.layout() != orig.layout():
            raise ValueError("table layouts differ between original and synthetic")
    diffs, weights = [], []
    for j, table in enumerate(orig.tables):
        # mean of per-replicate differences: exactly 0 when a replicate equals the original
        diffs.append(np.mean([s.tables[j] - table for s in syn], axis=0).ravel())
        weights.append(np.repeat(orig.region_counts, table.shape[1]))
    d = np.concatenate(diffs)
    if d.size == 0:
        return ULResult(orig.level, 0.0, d)
    if weighted:
        w = np.concatenate(weights)
        ul = float(np.sum(w * np.abs(d)) / np.sum(w))
    else:
        ul = float(np.mean(np.abs(d)))
    return ULResult(orig.level, ul, d)


# --- K and L functions ----------------------------------------------------------


def multitype_k(points: np.ndarray, is_type: np.ndarray, r: float, domain_area: float) -> float:
    """|D| * #{(a, b): a of the type, b != a, |a - b| <= r} / (n * n_type)."""
    return float(k_curve(points, is_type, [r], domain_area)[0])


def _pair_counts_brute(points: np.ndarray, type_idx: np.ndarray, radii: np.ndarray) -> np.ndarray:
    r2 = radii * radii
    counts = np.zeros(radii.size, dtype=np.int64)
    for start in range(0, type_idx.size, 256):
        block = type_idx[start : start + 256]
        d = np.stack([sq_dist(points, points[i]) for i in block])
        d[np.arange(block.size), block] = np.inf
        flat = np.sort(d.ravel())
        counts += np.searchsorted(flat, r2, side="right")
    return counts


def _pair_counts_grid(points: np.ndarray, type_idx: np.ndarray, radii: np.ndarray) -> np.ndarray:
    r_max = float(radii.max())
    grid = GridIndex(points, cell=max(r_max, 1e-9)) if r_max > 0 else GridIndex(points)
    r2 = radii * radii
    counts = np.zeros(radii.size, dtype=np.int64)
    for i in type_idx:
        near = grid.within(points[i], r_max)
        near = near[near != i]
        d = np.sort(sq_dist(points[near], points[i]))
        counts += np.searchsorted(d, r2, side="right")
    return counts


def k_curve(points, is_type, radii, domain_area: float, method: str = "brute") -> np.ndarray:
    """K-hat of one point type at each radius, without edge correction."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    is_type = np.asarray(is_type, dtype=bool)
    radii = np.asarray(radii, dtype=np.float64)
    if domain_area <= 0:
        raise ValueError("domain area must be positive")
    if np.any(radii < 0):
        raise ValueError("radii must be non-negative")
    type_idx = np.flatnonzero(is_type)
    n, n_i = points.shape[0], type_idx.size
    if n_i == 0:
        raise ValueError("no points of the requested type")
    counts = (_pair_counts_grid if method == "grid" else _pair_counts_brute)(points, type_idx, radii)
    return domain_area * counts / (n * n_i)


def l_function(k_value, r):
    return np.sqrt(np.asarray(k_value) / math.pi) - np.asarray(r)


def bounding_box(geo: np.ndarray) -> tuple[float, float, float, float]:
    lo = geo.min(axis=0)
    hi = geo.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def default_radii(geo: np.ndarray, num: int = 50) -> np.ndarray:
    x0, y0, x1, y1 = bounding_box(geo)
    return np.linspace(0.0, min(x1 - x0, y1 - y0) / 4.0, num)


def default_area(geo: np.ndarray) -> float:
    x0, y0, x1, y1 = bounding_box(geo)
    return max((x1 - x0) * (y1 - y0), 1.0)


@dataclass
class LCurves:
    radii: np.ndarray
    original: np.ndarray
    synthetic_mean: np.ndarray
    per_replicate: list[np.ndarray]


def l_curves(
    release: SyntheticRelease,
    orig: Dataset,
    predicate: Callable[[Dataset], np.ndarray],
    radii=None,
    domain_area: float | None = None,
    method: str = "brute",
) -> LCurves:
    """L-hat of the type picked by ``predicate``: original vs replicate mean."""
    radii = default_radii(orig.geo) if radii is None else np.asarray(radii, dtype=np.float64)
    area = default_area(orig.geo) if domain_area is None else domain_area
    orig_l = l_function(k_curve(orig.geo, predicate(orig), radii, area, method), radii)
    reps = [l_function(k_curve(rep.geo, predicate(rep), radii, area, method), radii) for rep in release.replicates]
    return LCurves(radii, orig_l, np.mean(reps, axis=0), reps)


# --- report -----------------------------------------------------------------------


def level_predicate(variable: str, levels: Sequence[str]) -> Callable[[Dataset], np.ndarray]:
    """Records whose ``variable`` label is one of ``levels``."""

    def pred(ds: Dataset) -> np.ndarray:
        var = ds.schema.variable(variable)
        codes = [var.levels.index(lv) + 1 for lv in levels]
        return np.isin(ds.column(variable), codes)

    return pred


@dataclass
class UtilityReport:
    ul_by_level: dict[int, float] = field(default_factory=dict)
    differences: dict[int, np.ndarray] = field(default_factory=dict)
    share_tables: dict[str, dict] = field(default_factory=dict)
    l_curves: dict[str, LCurves] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ul_by_level": {str(k): v for k, v in self.ul_by_level.items()},
            "shares": self.share_tables,
            "l_curves": {
                name: {
                    "r": c.radii.tolist(),
                    "original": c.original.tolist(),
                    "synthetic_mean": c.synthetic_mean.tolist(),
                }
                for name, c in self.l_curves.items()
            },
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "utility.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "ul_differences.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "difference"])
            for level, d in sorted(self.differences.items()):
                w.writerows((level, repr(float(v))) for v in d)
        with open(out / "l_curves.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["type", "r", "original", "synthetic_mean"])
            for name, c in self.l_curves.items():
                for r, a, b in zip(c.radii, c.original, c.synthetic_mean):
                    w.writerow([name, repr(float(r)), repr(float(a)), repr(float(b))])
        with open(out / "region_shares.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outcome", "region", "original", "synthetic_mean"])
            for name, table in self.share_tables.items():
                for region, row in table.items():
                    syn = "" if row["synthetic_mean"] is None else repr(row["synthetic_mean"])
                    w.writerow([name, region, repr(row["original"]), syn])


def evaluate_utility(
    orig: Dataset,
    release: SyntheticRelease,
    region_of_orig: np.ndarray,
    levels: Sequence[int] = (1, 2, 3),
    variables: Sequence[str] | None = None,
    outcomes: Mapping[str, Callable[[Dataset], np.ndarray]] | None = None,
    l_types: Mapping[str, Callable[[Dataset], np.ndarray]] | None = None,
    radii=None,
    domain_area: float | None = None,
    weighted: bool = False,
) -> UtilityReport:
    report = UtilityReport()
    region_set = sorted(set(np.asarray(region_of_orig, dtype=object).tolist()))
    syn_regions = [assign_regions(rep, orig, region_of_orig) for rep in release.replicates]
    variables = list(variables or orig.schema.categorical_names)
    for level in levels:
        if level > len(variables):
            continue
        o = interaction_tables(orig, region_of_orig, level, variables, region_set)
        s = [interaction_tables(rep, reg, level, variables, region_set) for rep, reg in zip(release.replicates, syn_regions)]
        res = ul_measure(o, s, weighted)
        report.ul_by_level[level] = res.ul
        report.differences[level] = res.differences
    for name, pred in (outcomes or {}).items():
        o_sh = region_shares(region_of_orig, pred(orig))
        s_sh = [region_shares(reg, pred(rep)) for rep, reg in zip(release.replicates, syn_regions)]
        table = {}
        for region in sorted(o_sh):
            vals = [sh[region] for sh in s_sh if region in sh]
            table[region] = {"original": o_sh[region], "synthetic_mean": float(np.mean(vals)) if vals else None}
        report.share_tables[name] = table
    for name, pred in (l_types or {}).items():
        report.l_curves[name] = l_curves(release, orig, pred, radii, domain_area)
    return report
