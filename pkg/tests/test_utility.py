import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset, small_schema
from geosynth.data_model import Dataset, SyntheticRelease
from geosynth.utility import (
    RegionMap,
    assign_regions,
    default_area,
    default_radii,
    evaluate_utility,
    interaction_tables,
    k_curve,
    l_curves,
    l_function,
    level_predicate,
    multitype_k,
    nearest_original,
    region_shares,
    ul_measure,
)


def brute_nearest(q, pts):
    best = None
    for i, p in enumerate(pts):
        d = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
        if best is None or d < best[0]:
            best = (d, i)
    return best[1]


def brute_k(points, is_type, r, area):
    n, n_i = len(points), int(np.sum(is_type))
    pairs = 0
    for a in range(n):
        if not is_type[a]:
            continue
        for b in range(n):
            if a != b and math.dist(points[a], points[b]) <= r:
                pairs += 1
    return area * pairs / (n * n_i)


# --- regions and nearest neighbours -------------------------------------------------


def test_nearest_on_five_points():
    pts = np.array([[0, 0], [10, 0], [0, 10], [10, 10], [5, 5]], dtype=float)
    q = np.array([[1, 1], [9, 1], [5, 5.1], [5, 0], [100, 100]])
    assert nearest_original(q, pts).tolist() == [brute_nearest(p, pts) for p in q.tolist()]
    # (5, 0) is equidistant from points 0 and 1: lowest index
    assert nearest_original(np.array([[5.0, 0.0]]), pts)[0] == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 30), st.integers(0, 2**32 - 1), st.integers(2, 50))
def test_nearest_matches_exhaustive_scan(n, nq, seed, span):
    r = np.random.default_rng(seed)
    # small integer grids produce duplicates and many distance ties
    pts = r.integers(0, span, size=(n, 2)).astype(float)
    q = r.integers(-2, span + 2, size=(nq, 2)).astype(float)
    assert nearest_original(q, pts).tolist() == [brute_nearest(p, pts) for p in q.tolist()]


def test_region_map_voronoi_and_tiles(tmp_path):
    rm = RegionMap(np.array([[0.0, 0.0], [10.0, 0.0]]), ("a", "b"))
    assert rm.assign(np.array([[1.0, 5.0], [9.0, 0.0], [5.0, 0.0]])).tolist() == ["a", "b", "a"]
    rm.to_csv(tmp_path / "r.csv")
    back = RegionMap.from_csv(tmp_path / "r.csv")
    assert back.ids == rm.ids and np.array_equal(back.centers, rm.centers)
    tiles = RegionMap(tile=100.0)
    assert tiles.assign(np.array([[150.0, -1.0]])).tolist() == ["1:-1"]
    with pytest.raises(ValueError):
        RegionMap()
    with pytest.raises(ValueError):
        RegionMap(np.zeros((2, 2)), ("a",))


def test_assign_regions_on_original_support(rng):
    orig = random_dataset(rng, 50, n_points=15)
    region = np.array([f"R{i % 4}" for i in range(orig.n)], dtype=object)
    # coincident points take the region of the lowest-index record at that point
    expected = [region[brute_nearest(p, orig.geo.tolist())] for p in orig.geo.tolist()]
    shuffled = orig.take(rng.permutation(orig.n))
    got = assign_regions(shuffled, orig, region)
    assert got.tolist() == [region[brute_nearest(p, orig.geo.tolist())] for p in shuffled.geo.tolist()]
    once = assign_regions(orig, orig, region)
    assert once.tolist() == expected
    assert assign_regions(orig, orig, once).tolist() == once.tolist()


def test_region_shares():
    regions = np.array(["a"] * 10 + ["b"] * 2, dtype=object)
    flags = np.array([1, 1, 1] + [0] * 7 + [1, 1], dtype=bool)
    assert region_shares(regions, flags) == {"a": 0.3, "b": 1.0}
    assert region_shares(regions, np.ones(12, dtype=bool)) == {"a": 1.0, "b": 1.0}


# --- interaction tables and UL --------------------------------------------------------


def test_level_one_binary_frequencies():
    schema = small_schema(levels=(2,))
    ds = Dataset(schema, [[1], [1], [1], [2]], np.zeros((4, 2)))
    t = interaction_tables(ds, np.array(["z"] * 4, dtype=object), 1)
    assert t.tables[0].tolist() == [[0.75, 0.25]]


def test_level_three_matches_crosstab(rng):
    ds = random_dataset(rng, 300, levels=(2, 3, 2, 4))
    regions = rng.choice(np.array(["a", "b", "c"], dtype=object), size=ds.n)
    t = interaction_tables(ds, regions, 3)
    names = ds.schema.categorical_names
    assert t.subsets == list(itertools.combinations(names, 3))
    for subset, table in zip(t.subsets, t.tables):
        dims = [ds.schema.variable(v).d for v in subset]
        for ri, reg in enumerate(t.regions):
            rows = [i for i in range(ds.n) if regions[i] == reg]
            for flat, cell in enumerate(itertools.product(*[range(1, d + 1) for d in dims])):
                hits = sum(all(ds.column(v)[i] == c for v, c in zip(subset, cell)) for i in rows)
                assert table[ri, flat] == pytest.approx(hits / len(rows), abs=1e-15)
        assert np.allclose(table.sum(axis=1), 1.0, atol=1e-12)


def test_empty_region_gets_zero_row(rng):
    ds = random_dataset(rng, 20)
    t = interaction_tables(ds, np.array(["a"] * 20, dtype=object), 2, region_set=["a", "b"])
    assert all(np.all(tab[1] == 0) for tab in t.tables)
    with pytest.raises(ValueError):
        interaction_tables(ds, np.array(["a"] * 20, dtype=object), 4)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_ul_identity(rng, level):
    ds = random_dataset(rng, 100, levels=(2, 3, 2, 3))
    regions = rng.choice(np.array(["a", "b"], dtype=object), size=ds.n)
    t = interaction_tables(ds, regions, level)
    assert ul_measure(t, [t, t]).ul == 0.0


def test_ul_binary_hand_case():
    schema = small_schema(levels=(2,))
    reg = np.array(["z"] * 4, dtype=object)
    o = interaction_tables(Dataset(schema, [[1], [1], [1], [2]], np.zeros((4, 2))), reg, 1)
    s = interaction_tables(Dataset(schema, [[1], [2], [1], [2]], np.zeros((4, 2))), reg, 1)
    res = ul_measure(o, [s])
    assert res.ul == 0.25
    assert res.differences.tolist() == [-0.25, 0.25]


def test_ul_averages_replicates_before_differencing():
    schema = small_schema(levels=(2,))
    reg = np.array(["z"] * 2, dtype=object)
    mk = lambda codes: interaction_tables(Dataset(schema, codes, np.zeros((2, 2))), reg, 1)
    o = mk([[1], [2]])
    res = ul_measure(o, [mk([[1], [1]]), mk([[2], [2]])])
    assert res.ul == 0.0


def test_ul_weighted_and_layout_checks(rng):
    ds = random_dataset(rng, 60)
    regions = np.array(["a"] * 50 + ["b"] * 10, dtype=object)
    o = interaction_tables(ds, regions, 1)
    s = interaction_tables(ds.with_columns({"v0": 3 - ds.column("v0")}), regions, 1)
    assert ul_measure(o, [s], weighted=True).ul >= 0
    other = interaction_tables(ds, regions, 2)
    with pytest.raises(ValueError):
        ul_measure(o, [other])
    with pytest.raises(ValueError):
        ul_measure(o, [])


# --- K and L ------------------------------------------------------------------------


def test_three_point_hand_example():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 0.0]])
    is_a = np.array([True, True, False])
    k = multitype_k(pts, is_a, 1.5, 100.0)
    assert abs(k - 50 / 3) <= 1e-12
    assert abs(l_function(k, 1.5) - (math.sqrt(50 / (3 * math.pi)) - 1.5)) <= 1e-12


def test_k_edge_cases():
    assert multitype_k(np.array([[0.0, 0.0], [5.0, 5.0]]), np.array([True, False]), 1.0, 10.0) == 0.0
    with pytest.raises(ValueError):
        multitype_k(np.zeros((2, 2)), np.array([False, False]), 1.0, 10.0)
    with pytest.raises(ValueError):
        multitype_k(np.zeros((2, 2)), np.array([True, False]), 1.0, 0.0)
    assert l_function(0.0, 2.0) == -2.0
    assert l_function(math.pi * 9, 3.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(100))
def test_k_matches_pair_enumeration(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 201))
    pts = r.integers(0, 100, size=(n, 2)).astype(float) if seed % 2 else r.uniform(0, 100, size=(n, 2))
    is_type = r.random(n) < 0.4
    is_type[0] = True
    radii = np.linspace(0, 40, 9)
    brute = k_curve(pts, is_type, radii, 1e4)
    assert np.array_equal(brute, k_curve(pts, is_type, radii, 1e4, method="grid"))
    assert np.all(np.diff(brute) >= 0)
    for r_, k in zip(radii[::4], brute[::4]):
        assert k == pytest.approx(brute_k(pts.tolist(), is_type, r_, 1e4), rel=1e-12)


def test_l_curves_and_defaults(rng):
    ds = random_dataset(rng, 60, n_points=60)
    ds = ds.with_columns(geo=ds.geo + rng.random(ds.geo.shape))  # no coincident points
    pred = level_predicate("v0", ["l0"])
    radii = default_radii(ds.geo, 10)
    assert radii[0] == 0 and radii.size == 10
    assert default_area(ds.geo) > 0
    same = l_curves(SyntheticRelease([ds, ds], ("geo",)), ds, pred, radii)
    assert np.array_equal(same.original, same.synthetic_mean)
    assert same.original[0] == 0.0
    other = ds.with_columns(geo=ds.geo[::-1].copy())
    mixed = l_curves(SyntheticRelease([ds, other], ("geo",)), ds, pred, radii)
    area = default_area(ds.geo)
    per = [l_function(k_curve(x.geo, pred(x), radii, area), radii) for x in (ds, other)]
    assert np.allclose(mixed.synthetic_mean, (per[0] + per[1]) / 2, rtol=0, atol=1e-12)


def test_evaluate_utility_report(tmp_path, rng):
    orig = random_dataset(rng, 80, n_points=20)
    region = RegionMap(np.array([[0.0, 0.0], [500.0, 500.0]]), ("a", "b")).assign(orig.geo)
    pred = level_predicate("v1", ["l2"])
    rep = evaluate_utility(orig, SyntheticRelease([orig, orig], ("geo",)), region, (1, 2, 3), outcomes={"x": pred},
                           l_types={"x": pred}, radii=[0.0, 50.0, 100.0])
    assert rep.ul_by_level == {1: 0.0, 2: 0.0, 3: 0.0}
    for row in rep.share_tables["x"].values():
        assert row["original"] == row["synthetic_mean"] and 0 <= row["original"] <= 1
    rep.write(tmp_path)
    for name in ("utility.json", "ul_differences.csv", "l_curves.csv", "region_shares.csv"):
        assert (tmp_path / name).exists()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 3))
def test_ul_identity_for_any_replicate_count(seed, m, level):
    r = np.random.default_rng(seed)
    ds = random_dataset(r, int(r.integers(5, 120)), levels=(2, 3, 4))
    regions = r.choice(np.array(["a", "b", "c"], dtype=object), size=ds.n)
    t = interaction_tables(ds, regions, level)
    assert ul_measure(t, [t] * m).ul == 0.0
    assert ul_measure(t, [t] * m, weighted=True).ul == 0.0
