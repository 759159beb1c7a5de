from pathlib import Path

import numpy as np
import pytest

from geosynth.data_model import CATEGORICAL, GEOCODE, Dataset, Schema, Variable

ROOT = Path(__file__).resolve().parent.parent


def small_schema(levels=(2, 3, 2), targets=("geo",), qis=None) -> Schema:
    variables = [Variable(f"v{j}", CATEGORICAL, tuple(f"l{i}" for i in range(d))) for j, d in enumerate(levels)]
    variables.append(Variable("geo", GEOCODE))
    names = tuple(v.name for v in variables)
    return Schema(tuple(variables), tuple(targets), names if qis is None else tuple(qis))


def random_dataset(rng: np.random.Generator, n: int, levels=(2, 3, 2), n_points: int | None = None, **kw) -> Dataset:
    schema = small_schema(levels, **kw)
    codes = np.column_stack([rng.integers(1, d + 1, size=n) for d in levels]) if levels else np.zeros((n, 0))
    n_points = n_points or max(1, n // 2)
    support = rng.integers(0, 500, size=(n_points, 2)).astype(float)
    geo = support[rng.integers(0, n_points, size=n)]
    return Dataset(schema, codes, geo)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_paths():
    return {
        "config": ROOT / "configs" / "toy_pipeline.yaml",
        "data": ROOT / "data" / "toy_population.csv",
        "schema": ROOT / "data" / "toy_schema.yaml",
        "regions": ROOT / "data" / "toy_regions.csv",
    }


@pytest.fixture(autouse=True)
def _leaves_respect_minbucket(monkeypatch):
    """Every tree fitted anywhere in the suite keeps leaves >= minbucket."""
    from geosynth import cart

    original = cart.fit_tree

    def checked(frame, target, predictors, cfg=cart.CartConfig()):
        tree = original(frame, target, predictors, cfg)
        if not tree.root.is_leaf:
            sizes = [v.size for v in tree.leaf_values]
            assert min(sizes) >= cfg.minbucket, sizes
        return tree

    monkeypatch.setattr(cart, "fit_tree", checked)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number = getattr(report, "criterion", None)
    if number is None:
        return
    text, outcomes = _CRITERIA.setdefault(number[0], (number[1], []))
    outcomes.append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, outcomes = _CRITERIA[number]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {text}")
