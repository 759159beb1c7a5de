"""Simulated worker populations with spatially correlated attributes.

Stand-in for confidential register data: people live at addresses on an
integer-meter grid clustered around towns, and the attribute mix (age,
foreign status, training, wage) shifts from town to town.
"""
from __future__ import annotations

import numpy as np

from .data_model import CATEGORICAL, GEOCODE, Dataset, Schema, Variable
from .utility import RegionMap

LEVELS = {
    "sex": ("male", "female"),
    "age": ("15-24", "25-34", "35-44", "45-54", "55-59", "60+"),
    "foreign": ("no", "yes"),
    "training": ("none", "vocational", "university"),
    "industry": ("agriculture", "manufacturing", "construction", "trade", "services", "public"),
    "occupation": ("manual", "technical", "clerical", "sales", "manager"),
    "wage": ("low", "mid", "high", "top"),
}

QUASI_IDENTIFIERS = ("sex", "age", "industry", "occupation", "foreign", "geo")


def toy_schema(targets=("geo",)) -> Schema:
    variables = [Variable(name, CATEGORICAL, levels) for name, levels in LEVELS.items()]
    variables.append(Variable("geo", GEOCODE))
    return Schema(tuple(variables), tuple(targets), QUASI_IDENTIFIERS)


def _draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One category (1-based) per row of a probability matrix."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    return (cum < u[:, None]).sum(axis=1) + 1


def simulate_population(
    n: int,
    seed: int = 0,
    n_towns: int = 8,
    extent: float = 40_000.0,
    n_regions: int = 24,
) -> tuple[Dataset, RegionMap]:
    """n people at clustered addresses plus a Voronoi region map."""
    rng = np.random.default_rng(seed)
    towns = rng.uniform(0.15 * extent, 0.85 * extent, size=(n_towns, 2))
    spread = rng.uniform(0.02, 0.06, size=n_towns) * extent
    size = rng.dirichlet(np.full(n_towns, 2.0))

    # addresses: roughly 3 residents each on average
    n_addr = max(1, n // 3)
    addr_town = rng.choice(n_towns, size=n_addr, p=size)
    addr = np.rint(towns[addr_town] + rng.normal(size=(n_addr, 2)) * spread[addr_town, None])
    addr = np.clip(addr, 0, extent)
    weight = rng.gamma(1.5, size=n_addr)
    home = rng.choice(n_addr, size=n, p=weight / weight.sum())
    geo = addr[home].astype(np.float64)
    town = addr_town[home]
    # distance to own town centre, scaled: 0 in the centre, ~1 at the fringe
    radial = np.linalg.norm(geo - towns[town], axis=1) / (2 * spread[town])

    # town-level traits
    t_old = rng.beta(2, 5, size=n_towns)
    t_foreign = rng.beta(1, 12, size=n_towns)
    t_urban = rng.random(n_towns)

    sex = _draw(rng, np.tile([0.53, 0.47], (n, 1)))
    age_base = np.array([0.12, 0.22, 0.22, 0.22, 0.12, 0.10])
    old_shift = np.array([-0.5, -0.3, 0.0, 0.2, 0.6, 1.2])
    age_p = age_base * np.exp(np.outer(3 * t_old[town] + 0.8 * radial, old_shift))
    age = _draw(rng, age_p / age_p.sum(axis=1, keepdims=True))

    p_for = np.clip(t_foreign[town] * (1.6 - radial) * 1.5, 0.005, 0.6)
    foreign = 1 + (rng.random(n) < p_for)

    urban = t_urban[town] * np.exp(-radial)
    train_p = np.column_stack([0.25 + 0.2 * (foreign == 2), 0.55 - 0.2 * urban, 0.15 + 0.5 * urban])
    training = _draw(rng, train_p / train_p.sum(axis=1, keepdims=True))

    ind_p = np.column_stack([
        0.10 * (1 - urban) + 0.01,
        0.25 + 0.1 * (sex == 1),
        0.10 + 0.1 * (sex == 1),
        0.15 + 0.0 * urban,
        0.20 + 0.3 * urban,
        0.10 + 0.1 * (training == 3),
    ])
    industry = _draw(rng, ind_p / ind_p.sum(axis=1, keepdims=True))

    occ_p = np.column_stack([
        0.45 * (training == 1) + 0.10,
        0.30 * (training >= 2) + 0.05 * (industry == 2),
        0.20 + 0.1 * (sex == 2),
        0.15 + 0.2 * (industry == 4),
        0.03 + 0.15 * (training == 3) * (age >= 3),
    ])
    occupation = _draw(rng, occ_p / occ_p.sum(axis=1, keepdims=True))

    score = 0.6 * (training - 1) + 0.3 * (age >= 3) + 0.5 * (occupation == 5) + 0.4 * urban - 0.3 * (sex == 2)
    score = score + rng.normal(scale=0.6, size=n)
    cuts = np.quantile(score, [0.4, 0.7, 0.9])
    wage = 1 + np.searchsorted(cuts, score, side="right")

    codes = np.column_stack([sex, age, foreign, training, industry, occupation, wage]).astype(np.int64)
    ds = Dataset(toy_schema(), codes, geo)
    seeds = geo[rng.choice(n, size=min(n_regions, n), replace=False)]
    regions = RegionMap(seeds, tuple(f"Z{i:03d}" for i in range(seeds.shape[0])))
    return ds, regions


def two_class_codes(n: int, n_vars: int = 4, agreement: float = 0.999, seed: int = 0) -> np.ndarray:
    """0-based binary codes from a balanced two-class product-Bernoulli mixture.

    Class 0 puts ``agreement`` mass on level 0 of every variable and class 1
    the same mass on level 1.
    """
    rng = np.random.default_rng(seed)
    cls = rng.random(n) < 0.5
    p_one = np.where(cls, agreement, 1.0 - agreement)
    return (rng.random((n, n_vars)) < p_one[:, None]).astype(np.int64)
