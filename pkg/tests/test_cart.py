import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import random_dataset
from geosynth import cart
from geosynth.cart import (
    CartConfig,
    bayesian_bootstrap_draw,
    bayesian_bootstrap_weights,
    gini_impurity,
    srmi_frame,
    srmi_synthesize,
    synthesize_geocode_categorical,
    synthesize_geocode_continuous,
    synthesize_variable,
    variance_impurity,
)


# --- oracle -------------------------------------------------------------------


def node_cost(values, categorical):
    """n * impurity, from scratch."""
    n = len(values)
    if categorical:
        counts = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return n - sum(c * c for c in counts.values()) / n
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values)


def all_root_splits(x, y, categorical_x, categorical_y, minbucket):
    """Every admissible binary split of one predictor as (cost, left-set-or-threshold)."""
    out = []
    if categorical_x:
        levels = sorted(set(x))
        for r in range(1, len(levels)):
            for left in itertools.combinations(levels, r):
                if levels[0] not in left:
                    continue  # each partition once
                go = [v in left for v in x]
                out.append((go, frozenset(left)))
    else:
        xs = sorted(set(x))
        for a, b in zip(xs, xs[1:]):
            t = (a + b) / 2
            out.append(([v <= t for v in x], t))
    scored = []
    for go, desc in out:
        left = [yy for yy, g in zip(y, go) if g]
        right = [yy for yy, g in zip(y, go) if not g]
        if len(left) < minbucket or len(right) < minbucket:
            continue
        scored.append((node_cost(left, categorical_y) + node_cost(right, categorical_y), desc))
    return scored


def random_table(seed, n=30):
    r = np.random.default_rng(seed)
    frame = {
        "a": r.integers(1, 4, size=n),
        "b": r.integers(1, 6, size=n),
        "c": np.round(r.normal(size=n), 1),
        "y": r.integers(1, 4, size=n),
        "z": r.normal(size=n),
    }
    # make y depend on a and c so that splits are informative
    frame["y"] = np.where(r.random(n) < 0.6, np.where(frame["c"] > 0, 1, frame["a"]), frame["y"])
    return frame


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("target", ["y", "z"])
def test_root_split_matches_exhaustive_enumeration(seed, target):
    frame = random_table(seed)
    cfg = CartConfig(cp=0.0, minsplit=2, minbucket=3)
    preds = ["a", "b", "c"]
    tree = cart.fit_tree(frame, target, preds, cfg)
    y = frame[target].tolist()
    cat_y = target == "y"
    candidates = []
    for p in preds:
        for cost, desc in all_root_splits(frame[p].tolist(), y, p != "c", cat_y, cfg.minbucket):
            candidates.append((cost, p, desc))
    best_cost = min(c[0] for c in candidates)
    split = tree.root.split
    assert split is not None
    chosen = split.threshold if split.threshold is not None else split.left_levels
    chosen_cost = [c[0] for c in candidates if c[1] == split.predictor and (c[2] == chosen or c[2] == split.right_levels)]
    assert chosen_cost and chosen_cost[0] == pytest.approx(best_cost, rel=1e-12, abs=1e-12)
    winners = [c for c in candidates if abs(c[0] - best_cost) <= 1e-9]
    if len(winners) == 1:
        assert winners[0][1] == split.predictor
    assert tree.root.improvement == pytest.approx(node_cost(y, cat_y) - best_cost)


def test_impurity_functions():
    assert gini_impurity([5, 5]) == 0.5
    assert gini_impurity([3]) == 0.0
    assert variance_impurity([1.0, 3.0]) == 1.0
    with pytest.raises(ValueError):
        gini_impurity([0, 0])
    with pytest.raises(ValueError):
        gini_impurity([-1, 2])
    with pytest.raises(ValueError):
        variance_impurity([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=8).filter(lambda c: sum(c) > 0))
def test_gini_bounds(counts):
    g = gini_impurity(counts)
    k = sum(1 for c in counts if c > 0)
    assert -1e-15 <= g <= 1 - 1 / k + 1e-12


def test_pure_node_is_leaf():
    frame = {"x": np.arange(40) % 3, "y": np.ones(40, dtype=np.int64)}
    tree = cart.fit_tree(frame, "y", ["x"], CartConfig(cp=0.0))
    assert tree.root.is_leaf and tree.n_leaves == 1


def test_cp_one_blocks_every_split():
    frame = random_table(0, n=200)
    tree = cart.fit_tree(frame, "y", ["a", "b", "c"], CartConfig(cp=1.0))
    assert tree.root.is_leaf


def test_minsplit_and_minbucket_respected():
    frame = random_table(1, n=300)
    cfg = CartConfig(cp=0.0, minsplit=40, minbucket=15)
    tree = cart.fit_tree(frame, "z", ["a", "b", "c"], cfg)
    for node in tree.nodes():
        if not node.is_leaf:
            assert node.n >= cfg.minsplit
            assert node.left.n >= cfg.minbucket and node.right.n >= cfg.minbucket


def test_many_levels_use_ordered_scan():
    r = np.random.default_rng(4)
    x = r.integers(1, 21, size=400)
    y = (x > 10).astype(np.int64) + 1
    tree = cart.fit_tree({"x": x, "y": y}, "y", ["x"], CartConfig(cp=0.0, max_exhaustive_levels=12))
    assert tree.root.split.left_levels in (frozenset(range(1, 11)), frozenset(range(11, 21)))
    assert tree.n_leaves == 2


def test_unseen_level_goes_to_majority_child():
    x = np.array([1] * 20 + [2] * 10)
    y = np.array([1] * 20 + [2] * 10)
    tree = cart.fit_tree({"x": x, "y": y}, "y", ["x"], CartConfig(cp=0.0, minbucket=5))
    leaves = tree.apply({"x": np.array([1, 2, 3])})
    assert leaves[2] == leaves[0]


def test_leaves_store_training_values_and_apply_agrees():
    frame = random_table(2, n=120)
    tree = cart.fit_tree(frame, "y", ["a", "c"], CartConfig(cp=0.0, minbucket=5))
    ids = tree.apply(frame)
    for w, members in enumerate(tree.leaf_members):
        assert np.array_equal(np.flatnonzero(ids == w), members)
        assert np.array_equal(tree.leaf_values[w], frame["y"][members])
    assert "leaf" in tree.dump()


def test_leaf_membership_csv(tmp_path):
    frame = random_table(3, n=60)
    tree = cart.fit_tree(frame, "y", ["a"], CartConfig(cp=0.0, minbucket=5))
    tree.write_leaf_membership(tmp_path / "m.csv", frame)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "record_index,leaf_id" and len(lines) == 61


# --- Bayesian bootstrap ----------------------------------------------------------


def test_bootstrap_weights_are_a_simplex_point(rng):
    for n in (1, 2, 7):
        w = bayesian_bootstrap_weights(n, rng)
        assert w.size == n and np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


def test_bootstrap_draws_stay_in_leaf(rng):
    vals = np.array([4, 9, 9, 2])
    out = bayesian_bootstrap_draw(vals, 500, rng)
    assert set(out.tolist()) <= {4, 9, 2}
    assert bayesian_bootstrap_draw(np.array([7]), 3, rng).tolist() == [7, 7, 7]
    with pytest.raises(ValueError):
        bayesian_bootstrap_draw(np.array([]), 1, rng)


def test_bootstrap_marginal_is_uniform_over_leaf():
    rng = np.random.default_rng(99)
    draws = np.array([bayesian_bootstrap_draw(np.array([0, 1, 2]), 1, rng)[0] for _ in range(30_000)])
    counts = np.bincount(draws, minlength=3)
    assert stats.chisquare(counts).pvalue > 0.001


# --- synthesis ---------------------------------------------------------------------


def test_synthesize_variable_keeps_predictors(rng):
    frame = random_table(5, n=100)
    reps = synthesize_variable(frame, "y", ["a", "c"], CartConfig(minbucket=5), 3, rng)
    assert len(reps) == 3
    for col in reps:
        assert col.shape == (100,) and set(col.tolist()) <= set(frame["y"].tolist())


def test_srmi_routes_with_synthesized_values():
    # b copies a exactly; the tree for b splits on a, so b must follow synthetic a
    r = np.random.default_rng(8)
    a = r.integers(1, 3, size=200)
    frame = {"x": r.integers(1, 3, size=200), "a": a, "b": a.copy()}
    cfg = CartConfig(cp=0.0, minbucket=5)
    for rep in srmi_frame(frame, ["a", "b"], cfg, 4, np.random.default_rng(1)):
        assert np.array_equal(rep["a"], rep["b"])


def test_srmi_same_seed_same_result():
    frame = random_table(6, n=80)
    a = srmi_frame(frame, ["y", "z"], CartConfig(), 2, np.random.default_rng(5))
    b = srmi_frame(frame, ["y", "z"], CartConfig(), 2, np.random.default_rng(5))
    for ra, rb in zip(a, b):
        assert all(np.array_equal(ra[k], rb[k]) for k in ra)


def test_categorical_geocode_support(rng):
    ds = random_dataset(rng, 150, n_points=20)
    release = synthesize_geocode_categorical(ds, None, CartConfig(minbucket=5), 5, rng)
    release.check_against(ds)
    support = {tuple(p) for p in ds.geo.tolist()}
    for rep in release.replicates:
        assert {tuple(p) for p in rep.geo.tolist()} <= support


def test_continuous_geocode_draws_observed_coordinates(rng):
    ds = random_dataset(rng, 150, n_points=40)
    release = synthesize_geocode_continuous(ds, None, CartConfig(minbucket=5), 2, rng, geo_order=("geo_y", "geo_x"))
    release.check_against(ds)
    for rep in release.replicates:
        assert set(rep.geo[:, 0].tolist()) <= set(ds.geo[:, 0].tolist())
        assert set(rep.geo[:, 1].tolist()) <= set(ds.geo[:, 1].tolist())


def test_additional_variables_with_geocode(rng):
    ds = random_dataset(rng, 200, levels=(2, 3, 4), n_points=30)
    release = srmi_synthesize(ds, ["v2", "geo"], CartConfig(minbucket=5), 3, rng)
    release.check_against(ds)
    assert release.synthesized_variables == ("v2", "geo")
