"""Benchmark protocol: paired repeats, horizon sweeps, grid search, AUC
scoring, and deterministic CSV reports.

For every repeat the dataset is freshly split and logged once, and every
algorithm and parameter point sees exactly the same split and the same
logging realization (paired comparison). Each horizon is a fresh run on the
first so-many online examples. Curves average queries and test error across
repeats at each horizon; a configuration's score is the area under its
(mean queries, mean error) curve, and each algorithm reports its best grid
point.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import (
    DataSplit,
    Example,
    LoggedTriple,
    SyntheticSpec,
    apply_logging,
    generate_synthetic,
    parse_sparse_dataset,
    split_dataset,
    to_dense_matrix,
)
from .hypotheses import LinearModel
from .learners import ALGORITHMS, AlgoConfig
from .policies import (
    CertaintyPolicy,
    IdenticalPolicy,
    LoggingPolicy,
    TablePolicy,
    UncertaintyPolicy,
    UniformGroupsPolicy,
    calibrate_scale,
    fit_coarse_model,
    load_table_policy,
    policy_prob,
)
from .rng import child_seed

__all__ = [
    "DEFAULT_CAPACITY_GRID",
    "DEFAULT_ETA_GRID",
    "QUICK_CAPACITY_GRID",
    "QUICK_ETA_GRID",
    "PolicySpec",
    "DatasetSpec",
    "ExperimentConfig",
    "RunRecord",
    "CurvePoint",
    "ProtocolResult",
    "build_policy",
    "load_dataset",
    "horizon_schedule",
    "run_protocol",
    "auc",
    "aggregate_curves",
    "best_auc",
    "per_seed_best_auc",
    "pairwise_wins",
    "report",
    "records_to_json",
    "records_from_json",
    "parse_config_text",
    "apply_overrides",
    "config_to_experiment",
    "default_output_dir",
]

DEFAULT_CAPACITY_GRID: tuple[float, ...] = tuple(0.01 * 2**k for k in range(0, 19, 2))
DEFAULT_ETA_GRID: tuple[float, ...] = tuple(0.0001 * 2**k for k in range(0, 19, 2))
QUICK_CAPACITY_GRID: tuple[float, ...] = tuple(0.01 * 2**k for k in (0, 6, 12, 18))
QUICK_ETA_GRID: tuple[float, ...] = tuple(0.0001 * 2**k for k in (0, 6, 12, 18))

OUTPUT_DIR_ENV = "IDBAL_OUTDIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "out"))


@dataclass(frozen=True)
class PolicySpec:
    """Declarative logging-policy choice; margin policies are fitted and
    calibrated when the protocol materializes them."""

    name: str = "identical"
    p: float = 0.005
    p0: float = 0.005
    p1: float = 0.05
    p2: float = 0.5
    group_seed: int = 0
    scale: float | None = None
    calibration_target: float = 0.1
    coarse_fraction: float = 0.1
    table_path: str | None = None

    def __post_init__(self):
        if self.name not in ("identical", "uniform", "uncertainty", "certainty", "table"):
            raise ValueError(f"unknown policy {self.name!r}")


@dataclass(frozen=True)
class DatasetSpec:
    """Either a synthetic recipe or a path to a sparse text file."""

    name: str
    synthetic: SyntheticSpec | None = None
    path: str | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.path is None):
            raise ValueError("exactly one of synthetic or path must be set")


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetSpec, ...]
    policy: PolicySpec = field(default_factory=PolicySpec)
    algorithms: tuple[str, ...] = ("passive", "dbalw", "dbalwm", "idbal")
    repeats: int = 10
    horizon_base: int = 10
    horizon_growth: int = 2
    capacity_grid: tuple[float, ...] = DEFAULT_CAPACITY_GRID
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    test_fraction: float = 0.2
    logged_fraction: float = 0.5
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.datasets:
            raise ValueError("at least one dataset is required")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}")
        if self.repeats < 1 or self.horizon_base < 1 or self.horizon_growth < 2:
            raise ValueError("repeats and horizon_base must be >= 1, growth >= 2")
        if not self.capacity_grid or not self.eta_grid:
            raise ValueError("parameter grids cannot be empty")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """One (algorithm, parameter, repeat, horizon) outcome."""

    dataset: str
    algorithm: str
    capacity: float | None
    eta: float
    repeat: int
    horizon_index: int
    horizon: int
    queries: int
    test_error: float
    data_digest: str


@dataclass(frozen=True)
class CurvePoint:
    horizon_index: int
    n_bar: float
    e_bar: float


@dataclass(frozen=True)
class BestChoice:
    capacity: float | None
    eta: float
    auc: float


@dataclass(frozen=True)
class ProtocolResult:
    records: tuple[RunRecord, ...]
    curves: dict
    aucs: dict
    best: dict


def load_dataset(spec: DatasetSpec) -> list[Example]:
    if spec.synthetic is not None:
        return generate_synthetic(spec.synthetic)
    return parse_sparse_dataset(Path(spec.path).read_text(encoding="utf-8"))


def build_policy(
    spec: PolicySpec,
    data: Sequence[Example],
    dataset_name: str,
    master_seed: int,
    calibration_instances: Sequence | None = None,
) -> LoggingPolicy:
    """Materialize a policy spec. Margin policies fit their coarse model on a
    seeded slice of the dataset and, unless a scale was given, calibrate it so
    the mean reveal probability over calibration_instances hits the target."""
    if spec.name == "identical":
        return IdenticalPolicy(spec.p)
    if spec.name == "uniform":
        return UniformGroupsPolicy(spec.p0, spec.p1, spec.p2, spec.group_seed)
    if spec.name == "table":
        if spec.table_path is None:
            raise ValueError("table policy needs table_path")
        return load_table_policy(Path(spec.table_path).read_text(encoding="utf-8"))
    coarse = fit_coarse_model(
        data, spec.coarse_fraction, seed=child_seed(master_seed, dataset_name, "policy")
    )
    if spec.scale is not None:
        scale = spec.scale
    else:
        if not calibration_instances:
            raise ValueError("margin policy calibration needs instances")
        scale = calibrate_scale(spec.name, coarse, list(calibration_instances), spec.calibration_target)
    if spec.name == "uncertainty":
        return UncertaintyPolicy(scale, coarse)
    return CertaintyPolicy(scale, coarse)


def horizon_schedule(base: int, growth: int, online_size: int) -> list[int]:
    """base * growth^i for i = 0, 1, ... while the horizon fits the stream."""
    if base > online_size:
        raise ValueError(f"smallest horizon {base} exceeds the online split ({online_size})")
    horizons = []
    h = base
    while h <= online_size:
        horizons.append(h)
        h *= growth
    return horizons


def _data_digest(split: DataSplit, logged: Sequence[LoggedTriple]) -> str:
    digest = hashlib.blake2b(digest_size=6)
    digest.update(f"{len(split.test)},{len(split.logged)},{len(split.online)};".encode())
    digest.update(bytes(t.z for t in logged))
    for part in (split.test[:3], split.online[:3]):
        for ex in part:
            digest.update(ex.x.key().encode("utf-8"))
            digest.update(b"|")
    return digest.hexdigest()


def _param_points(algorithm: str, cfg: ExperimentConfig) -> list[tuple[float | None, float]]:
    if algorithm == "passive":
        return [(None, eta) for eta in cfg.eta_grid]
    return [(cap, eta) for cap in cfg.capacity_grid for eta in cfg.eta_grid]


def _run_repeat(cfg: ExperimentConfig, spec: DatasetSpec, data: list[Example], repeat: int) -> list[RunRecord]:
    split = split_dataset(
        data,
        (cfg.test_fraction, cfg.logged_fraction),
        seed=child_seed(cfg.master_seed, spec.name, repeat, "split"),
    )
    policy = build_policy(
        cfg.policy, data, spec.name, cfg.master_seed,
        calibration_instances=[ex.x for ex in split.logged],
    )
    logged = apply_logging(
        split.logged, policy, seed=child_seed(cfg.master_seed, spec.name, repeat, "logging")
    )
    digest = _data_digest(split, logged)
    dim = max((ex.x.max_index() for ex in data), default=1)
    logged_q0 = np.array([policy_prob(policy, t.x) for t in logged])
    logged_dense = to_dense_matrix([t.x for t in logged], dim)
    horizons = horizon_schedule(cfg.horizon_base, cfg.horizon_growth, len(split.online))
    records: list[RunRecord] = []
    for algorithm in cfg.algorithms:
        runner = ALGORITHMS[algorithm]
        for capacity, eta in _param_points(algorithm, cfg):
            for index, horizon in enumerate(horizons):
                run_cfg = AlgoConfig(
                    mode="practical",
                    capacity=capacity if capacity is not None else 0.01,
                    eta=eta,
                )
                seed = child_seed(
                    cfg.master_seed, spec.name, repeat, algorithm, capacity, eta, horizon
                )
                result = runner(
                    logged,
                    split.online[:horizon],
                    policy,
                    LinearModel.zeros(dim),
                    run_cfg,
                    seed,
                    test_data=split.test,
                    logged_q0=logged_q0,
                    logged_dense=logged_dense,
                )
                records.append(
                    RunRecord(
                        dataset=spec.name,
                        algorithm=algorithm,
                        capacity=capacity,
                        eta=eta,
                        repeat=repeat,
                        horizon_index=index,
                        horizon=horizon,
                        queries=result.query_count,
                        test_error=float(result.final_test_error),
                        data_digest=digest,
                    )
                )
    return records


def _repeat_task(payload: tuple) -> list[RunRecord]:
    cfg, spec, data, repeat = payload
    return _run_repeat(cfg, spec, data, repeat)


def run_protocol(cfg: ExperimentConfig) -> ProtocolResult:
    """Execute the full paired protocol and aggregate curves, AUCs, and the
    per-algorithm best grid points. Deterministic in cfg.master_seed
    regardless of worker count."""
    tasks = []
    for spec in cfg.datasets:
        data = load_dataset(spec)
        for repeat in range(cfg.repeats):
            tasks.append((cfg, spec, data, repeat))
    records: list[RunRecord] = []
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for chunk in pool.map(_repeat_task, tasks):
                records.extend(chunk)
    else:
        for task in tasks:
            records.extend(_repeat_task(task))
    records_tuple = tuple(records)
    curves = aggregate_curves(records_tuple)
    aucs = {key: auc(points) for key, points in curves.items()}
    best: dict[tuple[str, str], BestChoice] = {}
    for dataset, algorithm in sorted({(r.dataset, r.algorithm) for r in records_tuple}):
        best[(dataset, algorithm)] = best_auc(aucs, dataset, algorithm)
    return ProtocolResult(records=records_tuple, curves=curves, aucs=aucs, best=best)


def aggregate_curves(records: Iterable[RunRecord]) -> dict:
    """Mean (queries, test error) per horizon across repeats, keyed by
    (dataset, algorithm, capacity, eta), points ordered by mean queries."""
    groups: dict[tuple, dict[int, list[RunRecord]]] = {}
    for record in records:
        key = (record.dataset, record.algorithm, record.capacity, record.eta)
        groups.setdefault(key, {}).setdefault(record.horizon_index, []).append(record)
    curves: dict[tuple, tuple[CurvePoint, ...]] = {}
    for key, by_horizon in groups.items():
        points = []
        for horizon_index in sorted(by_horizon):
            rows = by_horizon[horizon_index]
            n_bar = float(np.mean([r.queries for r in rows]))
            e_bar = float(np.mean([r.test_error for r in rows]))
            points.append(CurvePoint(horizon_index, n_bar, e_bar))
        points.sort(key=lambda p: (p.n_bar, p.horizon_index))
        curves[key] = tuple(points)
    return curves


def auc(points: Sequence[CurvePoint]) -> float:
    """Trapezoid area under the (mean queries, mean error) curve.

    Points must come sorted by n_bar; a narrower-than-previous point is a
    contract violation, not something to silently reorder here.
    """
    total = 0.0
    for left, right in zip(points, points[1:]):
        width = right.n_bar - left.n_bar
        if width < 0.0:
            raise ValueError("curve points must be sorted by mean queries")
        total += 0.5 * (left.e_bar + right.e_bar) * width
    return total


# worked example kept next to the implementation: area of the three-point
# curve below is 0.5*(1.0+0.5)*10 + 0.5*(0.5+0.25)*20 = 7.5 + 7.5
EXAMPLE_CURVE: tuple[CurvePoint, ...] = (
    CurvePoint(0, 0.0, 1.0),
    CurvePoint(1, 10.0, 0.5),
    CurvePoint(2, 30.0, 0.25),
)
EXAMPLE_CURVE_AREA: float = 15.0


def best_auc(aucs: dict, dataset: str, algorithm: str) -> BestChoice:
    """Smallest AUC over the grid; ties break toward the smallest
    (capacity, eta) pair."""
    entries = [
        (value, key[2] if key[2] is not None else -1.0, key[3])
        for key, value in aucs.items()
        if key[0] == dataset and key[1] == algorithm
    ]
    if not entries:
        raise ValueError(f"no runs recorded for {dataset}/{algorithm}")
    value, cap_key, eta = min(entries)
    capacity = None if cap_key == -1.0 else cap_key
    return BestChoice(capacity=capacity, eta=eta, auc=value)


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return format(float(value), ".6g")


def report(result: ProtocolResult, out_dir: str | Path) -> dict[str, Path]:
    """Write summary.csv (best grid point per dataset and algorithm) and
    curves.csv (every raw run). UTF-8, LF, 6 significant digits; re-running
    the same protocol writes byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.csv"
    curves_path = out / "curves.csv"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("dataset,algorithm,best_auc,best_C,best_eta\n")
        for (dataset, algorithm), choice in sorted(result.best.items()):
            fh.write(
                f"{dataset},{algorithm},{_fmt(choice.auc)},{_fmt(choice.capacity)},{_fmt(choice.eta)}\n"
            )
    with open(curves_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("dataset,algorithm,repeat,horizon,queries,test_error\n")
        ordered = sorted(
            result.records,
            key=lambda r: (
                r.dataset,
                r.algorithm,
                r.capacity if r.capacity is not None else -1.0,
                r.eta,
                r.repeat,
                r.horizon_index,
            ),
        )
        for r in ordered:
            fh.write(
                f"{r.dataset},{r.algorithm},{r.repeat},{r.horizon},{r.queries},{_fmt(r.test_error)}\n"
            )
    pairwise_path = out / "pairwise.csv"
    with open(pairwise_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("dataset,algorithm_a,algorithm_b,wins_a,repeats,fraction\n")
        for dataset in sorted({r.dataset for r in result.records}):
            table = pairwise_wins(result.records, dataset)
            for (a, b), (wins, total) in sorted(table.items()):
                fh.write(f"{dataset},{a},{b},{wins},{total},{_fmt(wins / total)}\n")
    return {"summary": summary_path, "curves": curves_path, "pairwise": pairwise_path}


def per_seed_best_auc(records: Iterable[RunRecord], dataset: str, algorithm: str) -> dict[int, float]:
    """For each repeat: the smallest per-repeat curve area over the grid.

    The per-repeat curve is (queries, test_error) across horizons, sorted by
    query count. This is the paired quantity: two algorithms' values at the
    same repeat index saw the same split and logging realization.
    """
    by_param: dict[tuple, dict[int, list[RunRecord]]] = {}
    for record in records:
        if record.dataset != dataset or record.algorithm != algorithm:
            continue
        by_param.setdefault((record.capacity, record.eta), {}).setdefault(record.repeat, []).append(record)
    best: dict[int, float] = {}
    for param_runs in by_param.values():
        for repeat, rows in param_runs.items():
            rows = sorted(rows, key=lambda r: r.horizon_index)
            points = [CurvePoint(r.horizon_index, float(r.queries), r.test_error) for r in rows]
            points.sort(key=lambda p: (p.n_bar, p.horizon_index))
            value = auc(points)
            if repeat not in best or value < best[repeat]:
                best[repeat] = value
    return best


def pairwise_wins(records: Iterable[RunRecord], dataset: str) -> dict[tuple[str, str], tuple[int, int]]:
    """(wins, repeats) for every ordered algorithm pair: how often A's
    per-seed best area is strictly below B's on the shared repeat."""
    records = [r for r in records if r.dataset == dataset]
    algorithms = sorted({r.algorithm for r in records})
    per_algo = {a: per_seed_best_auc(records, dataset, a) for a in algorithms}
    out: dict[tuple[str, str], tuple[int, int]] = {}
    for a in algorithms:
        for b in algorithms:
            if a == b:
                continue
            shared = sorted(set(per_algo[a]) & set(per_algo[b]))
            wins = sum(1 for k in shared if per_algo[a][k] < per_algo[b][k])
            if shared:
                out[(a, b)] = (wins, len(shared))
    return out


def records_to_json(records: Iterable[RunRecord]) -> str:
    return json.dumps([asdict(r) for r in records], indent=0, sort_keys=True)


def records_from_json(text: str) -> tuple[RunRecord, ...]:
    rows = json.loads(text)
    return tuple(RunRecord(**row) for row in rows)


def rebuild_result(records: Iterable[RunRecord]) -> ProtocolResult:
    """Recompute curves, AUCs, and best choices from raw records."""
    records_tuple = tuple(records)
    curves = aggregate_curves(records_tuple)
    aucs = {key: auc(points) for key, points in curves.items()}
    best = {}
    for dataset, algorithm in sorted({(r.dataset, r.algorithm) for r in records_tuple}):
        best[(dataset, algorithm)] = best_auc(aucs, dataset, algorithm)
    return ProtocolResult(records=records_tuple, curves=curves, aucs=aucs, best=best)


# --- flat key = value configuration ---------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    """Flat 'key = value' lines; '#' comments and blank lines ignored."""
    out: dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {line_number}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def apply_overrides(config: dict[str, str], pairs: Sequence[str]) -> dict[str, str]:
    """Overlay '--key value' pairs from the command line onto a config dict."""
    merged = dict(config)
    if len(pairs) % 2 != 0:
        raise ValueError("overrides must come in '--key value' pairs")
    for flag, value in zip(pairs[::2], pairs[1::2]):
        if not flag.startswith("--"):
            raise ValueError(f"expected '--key', got {flag!r}")
        merged[flag[2:]] = value
    return merged


def _get(config: dict[str, str], key: str, default):
    if key not in config:
        return default
    text = config[key]
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _float_list(config: dict[str, str], key: str, default: tuple[float, ...]) -> tuple[float, ...]:
    if key not in config:
        return default
    return tuple(float(tok) for tok in config[key].split(",") if tok.strip())


def policy_from_config(config: dict[str, str]) -> PolicySpec:
    scale_text = config.get("policy.scale", "")
    return PolicySpec(
        name=_get(config, "policy.name", "identical"),
        p=_get(config, "policy.p", 0.005),
        p0=_get(config, "policy.p0", 0.005),
        p1=_get(config, "policy.p1", 0.05),
        p2=_get(config, "policy.p2", 0.5),
        group_seed=_get(config, "policy.group_seed", 0),
        scale=float(scale_text) if scale_text else None,
        calibration_target=_get(config, "policy.target", 0.1),
        coarse_fraction=_get(config, "policy.coarse_fraction", 0.1),
        table_path=config.get("policy.table") or None,
    )


def datasets_from_config(config: dict[str, str], quick: bool = False) -> tuple[DatasetSpec, ...]:
    source = _get(config, "data.source", "synthetic")
    if source == "file":
        path = config.get("data.path")
        if not path:
            raise ValueError("data.source = file needs data.path")
        return (DatasetSpec(name=Path(path).stem, path=path),)
    spec = SyntheticSpec(
        count=_get(config, "data.count", 6000),
        dim=_get(config, "data.dim", 30),
        flip_prob=_get(config, "data.flip_prob", 0.1),
        seed=_get(config, "data.seed", 0),
    )
    main = DatasetSpec(name="synthetic", synthetic=spec)
    if not quick:
        return (main,)
    return (
        main,
        DatasetSpec(name="synthetic-small", synthetic=SyntheticSpec(1500, 10, 0.1, seed=1)),
        DatasetSpec(name="synthetic-tiny", synthetic=SyntheticSpec(1000, 5, 0.1, seed=2)),
    )


def config_to_experiment(config: dict[str, str], quick: bool = False) -> ExperimentConfig:
    """Build the sweep configuration from a flat config dict. quick shrinks
    repeats and the grids and adds two small companion datasets."""
    algorithms = tuple(
        tok.strip()
        for tok in config.get("sweep.algorithms", "passive,dbalw,dbalwm,idbal").split(",")
        if tok.strip()
    )
    cap_default = QUICK_CAPACITY_GRID if quick else DEFAULT_CAPACITY_GRID
    eta_default = QUICK_ETA_GRID if quick else DEFAULT_ETA_GRID
    return ExperimentConfig(
        datasets=datasets_from_config(config, quick=quick),
        policy=policy_from_config(config),
        algorithms=algorithms,
        repeats=_get(config, "repeats", 5 if quick else 10),
        horizon_base=_get(config, "sweep.horizon_base", 10),
        horizon_growth=_get(config, "sweep.horizon_growth", 2),
        capacity_grid=_float_list(config, "sweep.capacity_grid", cap_default),
        eta_grid=_float_list(config, "sweep.eta_grid", eta_default),
        test_fraction=_get(config, "split.test_fraction", 0.2),
        logged_fraction=_get(config, "split.logged_fraction", 0.5),
        master_seed=_get(config, "seed", 0),
        workers=_get(config, "workers", 1),
    )
