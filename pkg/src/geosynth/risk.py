"""Identification-risk evaluation of a synthetic release.

The intruder knows some quasi-identifiers of a target plus its (true)
geocode, matches them exactly against every replicate, and averages the
per-replicate match probabilities 1/|candidates|. Probabilities are kept as
exact fractions so that argmax ties are counted without float artifacts.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data_model import Dataset, SyntheticRelease
from .mdav import ClusterPartition


@dataclass(frozen=True)
class IntruderScenario:
    """``grid_size``: 0 matches exact geocodes, None ignores the geocode."""

    quasi_identifiers: tuple[str, ...]
    grid_size: float | None = 0.0
    targets_per_cluster: int = 100
    block_on_cluster: bool = True

    def __post_init__(self):
        if self.grid_size is not None and self.grid_size < 0:
            raise ValueError("grid_size must be >= 0")

    @property
    def label(self) -> str:
        if self.grid_size is None:
            return "no geocode"
        if self.grid_size == 0:
            return "Exact"
        g = f"{self.grid_size:,.0f}" if float(self.grid_size).is_integer() else f"{self.grid_size:g}"
        return f"{g}x{g}"


@dataclass
class TargetResult:
    record: int
    c: int  # size of the argmax set, 0 if nothing matched
    hit: bool  # true record among the argmax set
    declared: int | None  # unique declared match, if any


@dataclass
class RiskReport:
    expected_match_risk: float
    true_match_rate: float
    false_match_rate: float | None
    n_targets: int
    n_unique: int
    per_target: list[TargetResult] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "ER": self.expected_match_risk,
            "TR": self.true_match_rate,
            "FR": self.false_match_rate,
            "N": self.n_targets,
            "unique_matches": self.n_unique,
        }

    def to_dict(self, detail: bool = False) -> dict:
        out = self.summary()
        if detail:
            out["per_target"] = [asdict(t) for t in self.per_target]
        return out


def sample_targets(part: ClusterPartition, per_cluster: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement of ``per_cluster`` records per cluster."""
    chosen = []
    for c in range(part.C):
        members = part.members(c)
        if per_cluster > members.size:
            raise ValueError(f"cluster {c} has {members.size} records, cannot sample {per_cluster}")
        chosen.append(np.sort(rng.choice(members, size=per_cluster, replace=False)))
    return np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)


def coarsen_geocode(p, g: float) -> tuple[int, int]:
    if g <= 0:
        raise ValueError("grid size must be positive")
    x, y = (p.x, p.y) if hasattr(p, "x") else p
    return math.floor(x / g), math.floor(y / g)


def _geo_keys(geo: np.ndarray, grid_size: float | None) -> list:
    if grid_size is None:
        return [None] * geo.shape[0]
    if grid_size == 0:
        return list(zip(geo[:, 0].tolist(), geo[:, 1].tolist()))
    cells = np.floor(geo / grid_size).astype(np.int64)
    return list(zip(cells[:, 0].tolist(), cells[:, 1].tolist()))


def _record_keys(ds: Dataset, scenario: IntruderScenario, clusters: np.ndarray | None) -> list[tuple]:
    qi = [q for q in scenario.quasi_identifiers if ds.schema.geocode is None or q != ds.schema.geocode.name]
    cols = [ds.column(q).tolist() for q in qi]
    geo = _geo_keys(ds.geo, scenario.grid_size) if ds.geo is not None else [None] * ds.n
    block = clusters.tolist() if (scenario.block_on_cluster and clusters is not None) else [None] * ds.n
    return list(zip(block, geo, *cols))


class MatchIndex:
    """Per-replicate lookup from a match key to the records sharing it."""

    def __init__(self, release: SyntheticRelease, scenario: IntruderScenario, clusters: np.ndarray | None = None):
        self.m = release.m
        self.scenario = scenario
        self.clusters = clusters
        self.tables = []
        for rep in release.replicates:
            table: dict[tuple, list[int]] = defaultdict(list)
            for i, key in enumerate(_record_keys(rep, scenario, clusters)):
                table[key].append(i)
            self.tables.append(table)

    def probabilities(self, key: tuple) -> dict[int, Fraction]:
        probs: dict[int, Fraction] = defaultdict(Fraction)
        for table in self.tables:
            cands = table.get(key)
            if cands:
                w = Fraction(1, len(cands) * self.m)
                for i in cands:
                    probs[i] += w
        return dict(probs)


def match_probabilities(
    original: Dataset,
    target: int,
    release: SyntheticRelease,
    scenario: IntruderScenario,
    clusters: np.ndarray | None = None,
    index: MatchIndex | None = None,
) -> dict[int, Fraction]:
    """Pr(J = i) for every release record i with nonzero probability.

    The target's quasi-identifiers and geocode come from the original data.
    """
    index = index or MatchIndex(release, scenario, clusters)
    key = _record_keys(original.take([target]), scenario, None if clusters is None else clusters[[target]])[0]
    return index.probabilities(key)


def risk_summaries(probabilities: Sequence[dict[int, Fraction]], true_records: Sequence[int]) -> RiskReport:
    n_targets = len(true_records)
    er = Fraction(0)
    k_sum = 0
    f_sum = 0
    s = 0
    details = []
    for probs, true in zip(probabilities, true_records):
        nonzero = {i: p for i, p in probs.items() if p > 0}
        if not nonzero:
            details.append(TargetResult(int(true), 0, False, None))
            continue
        top = max(nonzero.values())
        argmax = [i for i, p in nonzero.items() if p == top]
        c = len(argmax)
        hit = true in argmax
        if hit:
            er += Fraction(1, c)
        if c == 1:
            s += 1
            k_sum += hit
            f_sum += not hit
        details.append(TargetResult(int(true), c, bool(hit), int(argmax[0]) if c == 1 else None))
    return RiskReport(
        expected_match_risk=float(er),
        true_match_rate=100.0 * k_sum / n_targets if n_targets else 0.0,
        false_match_rate=100.0 * f_sum / s if s else None,
        n_targets=n_targets,
        n_unique=s,
        per_target=details,
    )


def evaluate_risk(
    original: Dataset,
    release: SyntheticRelease,
    scenario: IntruderScenario,
    targets: Iterable[int],
    clusters: np.ndarray | None = None,
) -> RiskReport:
    targets = [int(t) for t in targets]
    index = MatchIndex(release, scenario, clusters)
    keys = _record_keys(original.take(targets), scenario, None if clusters is None else clusters[targets])
    probs = [index.probabilities(k) for k in keys]
    return risk_summaries(probs, targets)


def risk_grid_sweep(
    original: Dataset,
    release: SyntheticRelease,
    scenarios: Sequence[IntruderScenario],
    targets: Sequence[int],
    clusters: np.ndarray | None = None,
) -> list[tuple[str, RiskReport]]:
    return [(s.label, evaluate_risk(original, release, s, targets, clusters)) for s in scenarios]


def write_risk_table(rows: Sequence[tuple[str, RiskReport]], path: str | Path, synthesizer: str = "") -> None:
    """Grid / ER / TR / FR rows, one per scenario."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["synthesizer", "grid", "ER", "TR", "FR"])
        for label, rep in rows:
            fr = "" if rep.false_match_rate is None else f"{rep.false_match_rate:.2f}"
            w.writerow([synthesizer, label, f"{rep.expected_match_risk:.2f}", f"{rep.true_match_rate:.2f}", fr])


def write_risk_json(rows: Sequence[tuple[str, RiskReport]], path: str | Path, extra: dict | None = None) -> None:
    payload = dict(extra or {})
    payload["scenarios"] = [{"grid": label, **rep.summary()} for label, rep in rows]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
