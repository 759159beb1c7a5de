"""End-to-end runs: cluster, synthesize per cluster in parallel, reassemble,
evaluate risk and utility.

Every stage reads its inputs from disk and writes its artifacts into the
output directory, so stages can be rerun independently. Random streams are
derived from ``(master seed, stage, cluster)`` with ``numpy.random.SeedSequence``
so results do not depend on worker count or scheduling.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import dpmpm
from .aggregation import aggregate_geocodes
from .cart import CONTINUOUS, CATEGORICAL, CartConfig, srmi_synthesize
from .data_model import (
    GEO_COLUMNS,
    DataError,
    Dataset,
    SchemaError,
    SyntheticRelease,
    load_csv,
    load_schema,
    reassemble,
    save_csv,
)
from .dpmpm import DpmpmConfig
from .mdav import ClusterPartition, mdav_partition, split_dataset
from .risk import IntruderScenario, risk_grid_sweep, sample_targets, write_risk_json, write_risk_table
from .utility import RegionMap, evaluate_utility, level_predicate

log = logging.getLogger(__name__)

SYNTHESIZERS = ("cart_categorical", "cart_continuous", "dpmpm")

# spawn keys separating the random streams of the stages
_SYNTH_STREAM = 1
_TARGET_STREAM = 2


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    """A module failed; message names the stage and cluster."""


@dataclass
class MdavSettings:
    k: int = 15_000
    index: str = "auto"


@dataclass
class CartSettings:
    cp: float = 1e-5
    minsplit: int = 20
    minbucket: int = 7
    max_exhaustive_levels: int = 12
    geo_order: list[str] = field(default_factory=lambda: list(GEO_COLUMNS))

    def config(self) -> CartConfig:
        return CartConfig(self.cp, self.minsplit, self.minbucket, self.max_exhaustive_levels)


@dataclass
class DpmpmSettings:
    F: int = 100
    a_alpha: float = 0.25
    b_alpha: float = 0.25
    dirichlet_a: float = 1.0
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 10
    acf_threshold: float = 0.2
    escalation_thin: int = 50
    label_swaps: int = 20

    def config(self) -> DpmpmConfig:
        return DpmpmConfig(**asdict(self))


@dataclass
class RiskSettings:
    quasi_identifiers: list[str] = field(default_factory=list)
    # 0 = exact geocode; None = geocode not used
    grids: list[float | None] = field(default_factory=lambda: [0, 100, 1000, 10000, 20000])
    targets_per_cluster: int = 100
    block_on_cluster: bool = True

    def scenarios(self) -> list[IntruderScenario]:
        return [
            IntruderScenario(tuple(self.quasi_identifiers), g, self.targets_per_cluster, self.block_on_cluster)
            for g in self.grids
        ]


@dataclass
class UtilitySettings:
    regions: str | None = None  # CSV of region centers (region,x,y)
    region_tile: float | None = None
    levels: list[int] = field(default_factory=lambda: [1, 2, 3])
    variables: list[str] | None = None
    weighted: bool = False
    # name -> {variable: ..., levels: [...]}
    outcomes: dict[str, dict] = field(default_factory=dict)
    l_types: dict[str, dict] = field(default_factory=dict)
    radii: list[float] | None = None
    n_radii: int = 50
    domain_area: float | None = None


@dataclass
class PipelineConfig:
    input: str = ""
    schema: str = ""
    output: str = "out"
    synthesizer: str = "cart_categorical"
    synthesis_targets: list[str] | None = None
    m: int = 5
    seed: int = 0
    threads: int = 1
    aggregation: float | None = None
    mdav: MdavSettings = field(default_factory=MdavSettings)
    cart: CartSettings = field(default_factory=CartSettings)
    dpmpm: DpmpmSettings = field(default_factory=DpmpmSettings)
    risk: RiskSettings = field(default_factory=RiskSettings)
    utility: UtilitySettings = field(default_factory=UtilitySettings)

    def validate(self) -> None:
        if self.synthesizer not in SYNTHESIZERS:
            raise ConfigError(f"synthesizer must be one of {SYNTHESIZERS}, got {self.synthesizer!r}")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.mdav.k < 1:
            raise ConfigError("mdav.k must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.aggregation is not None and self.aggregation <= 0:
            raise ConfigError("aggregation grid must be positive")
        try:
            self.cart.config()
            self.dpmpm.config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def out(self) -> Path:
        return Path(self.output)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, raw: dict | None, where: str):
    raw = dict(raw or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where or 'config'}: {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in raw.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}".strip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _set_path(raw: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def load_config(path: str | Path | None = None, overrides: Sequence[str] = (), **flags) -> PipelineConfig:
    """Read a YAML config; ``overrides`` are ``dotted.key=yaml-value`` strings
    and ``flags`` top-level values (None entries are ignored)."""
    raw: dict = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        base = path.parent
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        _set_path(raw, key.strip(), yaml.safe_load(value))
    from_file = {k for k in ("input", "schema", "output") if k in raw}
    for key, value in flags.items():
        if value is not None:
            raw[key] = value
            from_file.discard(key)
    cfg = _build(PipelineConfig, raw, "")
    # relative paths written in the config file are taken relative to that file
    for attr in sorted(from_file):
        value = getattr(cfg, attr)
        if value and not Path(value).is_absolute() and path is not None:
            setattr(cfg, attr, str(base / value))
    if cfg.utility.regions and not Path(cfg.utility.regions).is_absolute() and path is not None:
        cfg.utility.regions = str(base / cfg.utility.regions)
    cfg.validate()
    return cfg


# --- seeds -------------------------------------------------------------------------


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# --- stages ------------------------------------------------------------------------


def prepare_input(cfg: PipelineConfig) -> Dataset:
    """Original data, geographically aggregated if configured."""
    ds = load_original(cfg)
    if cfg.aggregation:
        ds = aggregate_geocodes(ds, cfg.aggregation)
    return ds


def load_original(cfg: PipelineConfig) -> Dataset:
    if not cfg.input or not cfg.schema:
        raise ConfigError("config needs input and schema paths")
    schema = load_schema(cfg.schema)
    ds = load_csv(cfg.input, schema)
    ds.check()
    return ds


def targets_for(cfg: PipelineConfig, ds: Dataset) -> list[str]:
    targets = list(cfg.synthesis_targets or ds.schema.synthesis_targets or [ds.schema.geocode.name])
    unknown = set(targets) - set(ds.schema.names)
    if unknown:
        raise ConfigError(f"synthesis targets not in schema: {sorted(unknown)}")
    return targets


def stage_cluster(cfg: PipelineConfig) -> ClusterPartition:
    ds = prepare_input(cfg)
    part = mdav_partition(ds.geo, cfg.mdav.k, cfg.mdav.index)
    cfg.out.mkdir(parents=True, exist_ok=True)
    part.to_csv(cfg.out / "partition.csv")
    log.info("clustered %d records into %d clusters", ds.n, part.C)
    return part


def load_partition(cfg: PipelineConfig, n: int) -> ClusterPartition:
    path = cfg.out / "partition.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing: run the 'cluster' stage first")
    part = ClusterPartition.from_csv(path, cfg.mdav.k)
    if part.assignments.size != n:
        raise DataError(f"{path} covers {part.assignments.size} records, data has {n}")
    return part


def synthesize_cluster(
    ds: Dataset,
    synthesizer: str,
    targets: Sequence[str],
    cart: CartSettings,
    dpm: DpmpmSettings,
    m: int,
    seed: int,
    cluster: int,
) -> tuple[list[Dataset], dict]:
    """m synthetic versions of one cluster plus a diagnostics record."""
    rng = stream(seed, _SYNTH_STREAM, cluster)
    info: dict = {"cluster": cluster, "n": ds.n}
    if synthesizer == "dpmpm":
        release, model = dpmpm.synthesize_dataset(ds, targets, dpm.config(), m, rng)
        info["dpmpm"] = model.diagnostics
    else:
        mode = CATEGORICAL if synthesizer == "cart_categorical" else CONTINUOUS
        trees: list = []
        release = srmi_synthesize(ds, targets, cart.config(), m, rng, mode, geo_order=cart.geo_order, trees_out=trees)
        info["leaves"] = {t.target: t.n_leaves for t in trees}
    return release.replicates, info


def _run_cluster(args):
    ds, c, cfg, targets = args
    try:
        return synthesize_cluster(ds, cfg.synthesizer, targets, cfg.cart, cfg.dpmpm, cfg.m, cfg.seed, c)
    except Exception as exc:  # re-raised with context in the parent
        raise PipelineError(f"stage synthesize, cluster {c}: {type(exc).__name__}: {exc}") from exc


def synthesize_all(cfg: PipelineConfig, ds: Dataset, part: ClusterPartition) -> tuple[SyntheticRelease, list[dict]]:
    targets = targets_for(cfg, ds)
    clusters = split_dataset(ds, part)
    jobs = [(c_ds, c, cfg, targets) for c, c_ds in enumerate(clusters)]
    if cfg.threads == 1 or len(jobs) == 1:
        results = [_run_cluster(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_cluster, jobs))
    replicates = [reassemble([res[0][j] for res in results], ds.n) for j in range(cfg.m)]
    return SyntheticRelease(replicates, tuple(targets)), [res[1] for res in results]


def release_paths(cfg: PipelineConfig, m: int | None = None) -> list[Path]:
    return [cfg.out / "release" / f"synthetic_{j + 1}.csv" for j in range(m or cfg.m)]


def stage_synthesize(cfg: PipelineConfig) -> SyntheticRelease:
    ds = prepare_input(cfg)
    part = load_partition(cfg, ds.n)
    release, info = synthesize_all(cfg, ds, part)
    (cfg.out / "release").mkdir(parents=True, exist_ok=True)
    for rep, path in zip(release.replicates, release_paths(cfg)):
        save_csv(rep, path)
    _dump_json(cfg.out / "release" / "synthesis.json", {"synthesizer": cfg.synthesizer, "targets": list(release.synthesized_variables), "clusters": info})
    return release


def load_release(cfg: PipelineConfig, schema) -> SyntheticRelease:
    reps = []
    for path in release_paths(cfg):
        if not path.exists():
            raise FileNotFoundError(f"{path} missing: run the 'synthesize' stage first")
        reps.append(load_csv(path, schema))
    info_path = cfg.out / "release" / "synthesis.json"
    targets: tuple = ()
    if info_path.exists():
        targets = tuple(json.loads(info_path.read_text())["targets"])
    return SyntheticRelease(reps, targets)


def stage_risk(cfg: PipelineConfig) -> list:
    orig = load_original(cfg)
    part = load_partition(cfg, orig.n)
    release = load_release(cfg, orig.schema)
    scenarios = cfg.risk.scenarios()
    qis = cfg.risk.quasi_identifiers or [q for q in orig.schema.quasi_identifiers if q != orig.schema.geocode.name]
    scenarios = [replace(s, quasi_identifiers=tuple(qis)) for s in scenarios]
    per_cluster = min(cfg.risk.targets_per_cluster, int(part.sizes.min()))
    targets = sample_targets(part, per_cluster, stream(cfg.seed, _TARGET_STREAM))
    rows = risk_grid_sweep(orig, release, scenarios, targets, part.assignments)
    write_risk_table(rows, cfg.out / "risk_table.csv", cfg.synthesizer)
    write_risk_json(rows, cfg.out / "risk.json", {"synthesizer": cfg.synthesizer, "quasi_identifiers": list(qis),
                                                   "targets_per_cluster": per_cluster,
                                                   "block_on_cluster": cfg.risk.block_on_cluster})
    return rows


def _region_map(cfg: PipelineConfig, orig: Dataset) -> RegionMap:
    u = cfg.utility
    if u.regions:
        return RegionMap.from_csv(u.regions)
    if u.region_tile:
        return RegionMap(tile=u.region_tile)
    raise ConfigError("utility needs either 'regions' (centers CSV) or 'region_tile'")


def stage_utility(cfg: PipelineConfig):
    orig = load_original(cfg)
    release = load_release(cfg, orig.schema)
    u = cfg.utility
    regions = _region_map(cfg, orig).assign(orig.geo)
    outcomes = {name: level_predicate(spec["variable"], spec["levels"]) for name, spec in u.outcomes.items()}
    l_types = {name: level_predicate(spec["variable"], spec["levels"]) for name, spec in u.l_types.items()}
    radii = u.radii
    if radii is None and l_types:
        from .utility import default_radii

        radii = default_radii(orig.geo, u.n_radii)
    report = evaluate_utility(orig, release, regions, u.levels, u.variables, outcomes, l_types, radii, u.domain_area, u.weighted)
    report.write(cfg.out)
    return report


def write_manifest(cfg: PipelineConfig) -> None:
    config = cfg.to_dict()
    # neither affects results; dropping them keeps manifests comparable across runs
    config.pop("threads")
    config.pop("output")
    payload = {
        "config": config,
        "seeds": {
            "master": cfg.seed,
            "synthesis_stream": f"SeedSequence({cfg.seed}, spawn_key=({_SYNTH_STREAM}, cluster_id))",
            "target_stream": f"SeedSequence({cfg.seed}, spawn_key=({_TARGET_STREAM},))",
        },
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg.out / "manifest.json", payload)


def run_pipeline(cfg: PipelineConfig) -> None:
    write_manifest(cfg)
    stage_cluster(cfg)
    stage_synthesize(cfg)
    stage_risk(cfg)
    stage_utility(cfg)


def _dump_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


INPUT_ERRORS = (ConfigError, DataError, SchemaError, FileNotFoundError, yaml.YAMLError)
