import filecmp
import json

import numpy as np
import pytest
import yaml

from geosynth import cli, pipeline
from geosynth.data_model import load_csv, load_schema, save_csv, save_schema
from geosynth.simulate import simulate_population


@pytest.fixture
def workspace(tmp_path):
    ds, regions = simulate_population(600, seed=3)
    save_csv(ds, tmp_path / "pop.csv")
    save_schema(ds.schema, tmp_path / "schema.yaml")
    regions.to_csv(tmp_path / "regions.csv")
    cfg = {
        "input": "pop.csv",
        "schema": "schema.yaml",
        "output": "out",
        "synthesizer": "cart_categorical",
        "m": 2,
        "seed": 7,
        "mdav": {"k": 150},
        "dpmpm": {"F": 10, "iterations": 100, "burn_in": 50, "thin": 5},
        "risk": {"grids": [0, 1000, None], "targets_per_cluster": 20},
        "utility": {
            "regions": "regions.csv",
            "outcomes": {"foreign": {"variable": "foreign", "levels": ["yes"]}},
            "l_types": {"foreign": {"variable": "foreign", "levels": ["yes"]}},
            "n_radii": 5,
        },
    }
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return tmp_path, path


def run(*args):
    return cli.main([str(a) for a in args])


def tree_files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def assert_same_tree(a, b):
    files = tree_files(a)
    assert files == tree_files(b)
    for f in files:
        assert filecmp.cmp(a / f, b / f, shallow=False), f


def test_pipeline_writes_all_artifacts(workspace):
    root, cfg = workspace
    assert run("pipeline", "--config", cfg) == 0
    out = root / "out"
    names = {str(p) for p in tree_files(out)}
    for expected in ("manifest.json", "partition.csv", "risk_table.csv", "risk.json", "utility.json",
                     "ul_differences.csv", "l_curves.csv", "region_shares.csv",
                     "release/synthetic_1.csv", "release/synthetic_2.csv", "release/synthesis.json"):
        assert expected in names
    schema = load_schema(root / "schema.yaml")
    orig = load_csv(root / "pop.csv", schema)
    support = {tuple(p) for p in orig.geo.tolist()}
    for j in (1, 2):
        rep = load_csv(out / "release" / f"synthetic_{j}.csv", schema)
        assert np.array_equal(rep.codes, orig.codes)
        assert {tuple(p) for p in rep.geo.tolist()} <= support
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["master"] == 7
    assert "threads" not in manifest["config"]


def test_stages_equal_full_run(workspace, tmp_path_factory):
    root, cfg = workspace
    assert run("pipeline", "--config", cfg, "--out", root / "full") == 0
    for stage in ("cluster", "synthesize", "evaluate-risk", "evaluate-utility"):
        assert run(stage, "--config", cfg, "--out", root / "staged") == 0
    assert_same_tree(root / "full", root / "staged")


@pytest.mark.parametrize("synth", ["cart_continuous", "dpmpm"])
def test_thread_count_does_not_change_results(workspace, synth):
    root, cfg = workspace
    assert run("pipeline", "--config", cfg, "--out", root / "a", "--threads", 1, "--set", f"synthesizer={synth}") == 0
    assert run("pipeline", "--config", cfg, "--out", root / "b", "--threads", 3, "--set", f"synthesizer={synth}") == 0
    assert_same_tree(root / "a", root / "b")


def test_seed_changes_release(workspace):
    root, cfg = workspace
    run("pipeline", "--config", cfg, "--out", root / "s1", "--seed", 1)
    run("pipeline", "--config", cfg, "--out", root / "s2", "--seed", 2)
    a = (root / "s1" / "release" / "synthetic_1.csv").read_bytes()
    assert a != (root / "s2" / "release" / "synthetic_1.csv").read_bytes()


def test_aggregation_before_synthesis(workspace):
    root, cfg = workspace
    assert run("pipeline", "--config", cfg, "--set", "aggregation=1000", "--out", root / "agg") == 0
    rep = load_csv(root / "agg" / "release" / "synthetic_1.csv", load_schema(root / "schema.yaml"))
    assert np.all(rep.geo % 1000 == 0)


def test_additional_targets(workspace):
    root, cfg = workspace
    assert run("pipeline", "--config", cfg, "--set", "synthesis_targets=[wage, geo]", "--out", root / "more") == 0
    info = json.loads((root / "more" / "release" / "synthesis.json").read_text())
    assert info["targets"] == ["wage", "geo"]


def test_input_errors_exit_1(workspace, capsys):
    root, cfg = workspace
    assert run("pipeline", "--config", root / "missing.yaml") == 1
    assert run("pipeline", "--config", cfg, "--set", "synthesizer=magic") == 1
    assert run("pipeline", "--config", cfg, "--set", "nonsense=1") == 1
    bad = root / "pop.csv"
    lines = bad.read_text().splitlines()
    lines[5] = lines[5].replace("male", "robot", 1)
    bad.write_text("\n".join(lines) + "\n")
    assert run("cluster", "--config", cfg) == 1
    assert "row 5" in capsys.readouterr().err


def test_missing_stage_input_exit_1(workspace):
    root, cfg = workspace
    assert run("synthesize", "--config", cfg, "--out", root / "empty") == 1


def test_internal_error_exit_2_names_cluster(workspace, monkeypatch, capsys):
    root, cfg = workspace

    def boom(*args, **kwargs):
        raise RuntimeError("kaput")

    monkeypatch.setattr(pipeline, "synthesize_cluster", boom)
    assert run("pipeline", "--config", cfg) == 2
    err = capsys.readouterr().err
    assert "synthesize" in err and "cluster 0" in err and "kaput" in err


def test_config_overrides_and_paths(workspace):
    root, cfg = workspace
    c = pipeline.load_config(cfg, ["cart.cp=0.01", "risk.grids=[0]"], seed=5, threads=None)
    assert c.cart.cp == 0.01 and c.risk.grids == [0] and c.seed == 5 and c.threads == 1
    assert c.input == str(root / "pop.csv")
    with pytest.raises(pipeline.ConfigError):
        pipeline.load_config(cfg, ["m=0"])
    with pytest.raises(pipeline.ConfigError):
        pipeline.load_config(cfg, ["noequals"])


def test_seed_streams_are_independent_of_order():
    a = pipeline.stream(3, 1, 4).random(3)
    b = pipeline.stream(3, 1, 4).random(3)
    c = pipeline.stream(3, 1, 5).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
