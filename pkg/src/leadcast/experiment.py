"""Experiment pipeline: ingest, augment, fit, evaluate, write artifacts.

One experiment is one (dataset, model, covariate scenario, seed) cell. Its
artifacts land in a directory named by the experiment id: a one-row
results.csv, the horizon trajectory, the per-epoch fit report, the best
checkpoint, and a FAILED marker file if any stage threw. Grids run cells in
isolated processes and consolidate the rows afterwards, so a re-run skips
every cell whose results row already exists.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .augment import augment_dataset, gamma_for_target_pcc, mean_realized_pcc
from .errors import ConfigurationError, DataError, NumericError
from .metrics import MetricsReport, evaluate
from .models import ModelConfig, init_parameters, save_checkpoint
from .tensor import seeded_rng
from .train import TrainConfig, fit
from .tsf import (
    BASE_CONTEXT_LENGTHS,
    DatasetPolicy,
    dataset_defaults,
    load_tsf,
)

DATA_DIR_ENV = "LEADCAST_DATA_DIR"

MODEL_KINDS = ("base_lstm", "seg_lstm")

RESULT_COLUMNS = [
    "experiment", "dataset", "model", "k", "skip_set", "gamma", "mean_pcc",
    "seed", "C", "H", "d", "smape", "mae", "rmse", "n_series", "n_excluded",
    "best_epoch", "train_seconds", "config_hash", "code_version",
]

FAILED_MARKER = "FAILED"


@dataclass
class ExperimentSpec:
    """Everything one training-and-evaluation cell needs, seed included.

    k=0 is the univariate baseline and forbids correlation controls; k>0
    needs exactly one of ``target_pcc`` (grid gamma chosen to land nearest
    that mean correlation) or an explicit ``gamma``.
    """

    dataset: str
    model: str
    k: int = 0
    target_pcc: float | None = None
    gamma: float | None = None
    skip_set: frozenset = frozenset()
    seed: int = 1
    context_length: int | None = None
    horizon: int | None = None
    segment_length: int | None = None
    hidden: int = 40
    layers: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.dataset:
            raise ConfigurationError("dataset name is required")
        if self.model not in MODEL_KINDS:
            raise ConfigurationError(
                f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.k not in (0, 1, 2, 3):
            raise ConfigurationError(f"k must be 0..3, got {self.k}")
        self.skip_set = frozenset(int(j) for j in self.skip_set)
        if self.k == 0:
            if self.target_pcc is not None or self.gamma is not None:
                raise ConfigurationError(
                    "k=0 is the univariate baseline; target_pcc/gamma do not apply")
            if self.skip_set:
                raise ConfigurationError("skip_set requires k >= 1")
        else:
            if (self.target_pcc is None) == (self.gamma is None):
                raise ConfigurationError(
                    "covariate runs need exactly one of target_pcc or gamma")
            if self.target_pcc is not None and not 0.0 < self.target_pcc <= 1.0:
                raise ConfigurationError(
                    f"target_pcc must be in (0, 1], got {self.target_pcc}")
            if self.gamma is not None and self.gamma < 0:
                raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
            if not self.skip_set <= set(range(1, self.k + 1)):
                raise ConfigurationError(
                    f"skip_set {sorted(self.skip_set)} must be a subset of 1..{self.k}")
            if len(self.skip_set) == self.k:
                raise ConfigurationError("skip_set removes every covariate")
        if self.model == "base_lstm" and self.segment_length not in (None, 1):
            raise ConfigurationError("segment_length applies to seg_lstm only")

    def experiment_id(self) -> str:
        parts = [self.dataset, self.model, f"k{self.k}"]
        if self.k > 0:
            if self.target_pcc is not None:
                parts.append(f"pcc{self.target_pcc:g}")
            else:
                parts.append(f"g{self.gamma:g}")
            if self.skip_set:
                parts.append("skip" + "+".join(str(j) for j in sorted(self.skip_set)))
        parts.append(f"s{self.seed}")
        return "-".join(parts)


def resolve_shape(spec: ExperimentSpec) -> tuple[int, int, int]:
    """(context length, horizon, segment length) for one spec.

    Falls back to the per-dataset conventions where the spec leaves a field
    unset; unknown datasets must therefore spell everything out.
    """
    seg = spec.model == "seg_lstm"
    C, H, d = spec.context_length, spec.horizon, spec.segment_length
    if H is None or C is None or (seg and d is None):
        default_h, season, context_multiple = dataset_defaults(spec.dataset)
        if H is None:
            H = default_h
        if seg:
            if d is None:
                d = season
            if C is None:
                C = context_multiple * d
        elif C is None:
            C = BASE_CONTEXT_LENGTHS[spec.dataset]
    if not seg:
        d = 1
    if C < 1 or H < 1 or d < 1:
        raise ConfigurationError(f"C={C}, H={H}, d={d} must all be >= 1")
    if (C + H) % d != 0:
        raise ConfigurationError(
            f"window length C+H={C + H} must be a multiple of the segment "
            f"length {d}")
    return C, H, d


def resolve_data_dir(data_dir=None) -> Path:
    root = data_dir or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise ConfigurationError(
            f"no dataset directory: pass --data-dir or set {DATA_DIR_ENV}")
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"dataset directory {root} does not exist")
    return root


def load_dataset(name: str, data_dir=None,
                 missing_value_action: str = "reject_series"):
    """Parse <data_dir>/<name>.tsf; returns (meta, records)."""
    path = resolve_data_dir(data_dir) / f"{name}.tsf"
    if not path.is_file():
        raise ConfigurationError(f"dataset file {path} not found")
    policy = DatasetPolicy(min_length=1,
                           missing_value_action=missing_value_action)
    return load_tsf(path, policy)


def config_hash(spec: ExperimentSpec, C: int, H: int, d: int) -> str:
    """Short stable digest of everything that shapes the run's numbers."""
    payload = {
        "dataset": spec.dataset,
        "model": spec.model,
        "k": spec.k,
        "target_pcc": spec.target_pcc,
        "gamma": spec.gamma,
        "skip_set": sorted(spec.skip_set),
        "seed": spec.seed,
        "C": C,
        "H": H,
        "d": d,
        "hidden": spec.hidden,
        "layers": spec.layers,
        "train": {
            "learning_rate": spec.train.learning_rate,
            "epochs": spec.train.epochs,
            "batch_size": spec.train.batch_size,
            "batches_per_epoch": spec.train.batches_per_epoch,
            "weight_decay": spec.train.weight_decay,
            "dropout": spec.train.dropout,
            "patience": spec.train.patience,
        },
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# ----------------------------------------------------------------------------
# Results CSV


def write_results_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in RESULT_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path} is missing result columns: {missing}")
        return list(reader)


def canonical_row(row: dict) -> tuple:
    """Row identity for determinism checks: every field but the wall time."""
    return tuple(str(row[c]) for c in RESULT_COLUMNS if c != "train_seconds")


# ----------------------------------------------------------------------------
# Single experiment


def _build_series(spec: ExperimentSpec, records):
    """Augment (or wrap) the records; returns (series, gamma, mean_pcc)."""
    if spec.k == 0:
        return augment_dataset(records, 0, 0.0, spec.seed), None, None
    gamma = spec.gamma
    if gamma is None:
        gamma = gamma_for_target_pcc(
            [r.values for r in records], spec.k, spec.target_pcc,
            seeded_rng(spec.seed, "gamma-select"))
    series = augment_dataset(records, spec.k, gamma, spec.seed,
                             skip_set=spec.skip_set)
    return series, gamma, mean_realized_pcc(series)


def _result_row(spec, C, H, d, gamma, mean_pcc, report, fit_report) -> dict:
    return {
        "experiment": spec.experiment_id(),
        "dataset": spec.dataset,
        "model": spec.model,
        "k": str(spec.k),
        "skip_set": "+".join(str(j) for j in sorted(spec.skip_set)),
        "gamma": "" if gamma is None else repr(float(gamma)),
        "mean_pcc": "" if mean_pcc is None else repr(float(mean_pcc)),
        "seed": str(spec.seed),
        "C": str(C),
        "H": str(H),
        "d": str(d),
        "smape": repr(report.smape),
        "mae": repr(report.mae),
        "rmse": repr(report.rmse),
        "n_series": str(report.n_series),
        "n_excluded": str(report.n_excluded),
        "best_epoch": str(fit_report.best_epoch),
        "train_seconds": repr(fit_report.wall_seconds),
        "config_hash": config_hash(spec, C, H, d),
        "code_version": __version__,
    }


def _write_trajectory(path, experiment_id: str, trajectory) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "t", "smape_t"])
        for t, value in enumerate(trajectory, start=1):
            writer.writerow([experiment_id, t, repr(float(value))])


def run(spec: ExperimentSpec, data_dir=None, out_root=".") -> MetricsReport:
    """Execute one cell end to end and write its artifact directory.

    Any failure leaves a FAILED marker holding the error text next to
    whatever artifacts were already written, then re-raises.
    """
    cell_dir = Path(out_root) / spec.experiment_id()
    cell_dir.mkdir(parents=True, exist_ok=True)
    marker = cell_dir / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    try:
        with threadpool_limits(limits=1):
            return _run_stages(spec, data_dir, cell_dir)
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise


def _run_stages(spec: ExperimentSpec, data_dir, cell_dir: Path) -> MetricsReport:
    _, records = load_dataset(spec.dataset, data_dir)
    C, H, d = resolve_shape(spec)
    series, gamma, mean_pcc = _build_series(spec, records)

    model_config = ModelConfig(
        kind=spec.model,
        n_covariates=spec.k - len(spec.skip_set),
        hidden=spec.hidden,
        layers=spec.layers,
        dropout=spec.train.dropout,
        segment_length=d,
    )
    params = init_parameters(model_config, seeded_rng(spec.seed, "init"))
    train_config = replace(spec.train, seed=spec.seed)

    params, fit_report = fit(params, model_config, series, C, H, train_config)
    fit_report.to_csv(cell_dir / "fit_report.csv")
    if fit_report.failed:
        raise NumericError(f"training failed: {fit_report.failure}")

    experiment_id = spec.experiment_id()
    save_checkpoint(cell_dir / "checkpoint.bin", params, model_config,
                    extra={"experiment": experiment_id,
                           "best_epoch": fit_report.best_epoch,
                           "config_hash": config_hash(spec, C, H, d)})

    report = evaluate(params, model_config, series, C, H, split="test",
                      metadata={"experiment": experiment_id,
                                "dataset": spec.dataset,
                                "seed": spec.seed})
    _write_trajectory(cell_dir / "trajectory.csv", experiment_id,
                      report.trajectory)
    row = _result_row(spec, C, H, d, gamma, mean_pcc, report, fit_report)
    write_results_csv(cell_dir / "results.csv", [row])
    return report


# ----------------------------------------------------------------------------
# Grid


@dataclass
class GridSpec:
    """Cross product of experiment settings plus optional probe specs.

    Univariate cells repeat over ``univariate_seeds``; covariate cells get
    one spec per (pcc, seed) pair from ``covariate_seeds``, mirroring how
    the benchmark means (5 runs) and covariate scenarios (single runs) are
    reported.
    """

    datasets: tuple
    models: tuple = MODEL_KINDS
    ks: tuple = (0, 1, 2, 3)
    pccs: tuple = (1.0, 0.9, 0.5)
    univariate_seeds: tuple = (1, 2, 3, 4, 5)
    covariate_seeds: tuple = (1,)
    context_length: int | None = None
    horizon: int | None = None
    segment_length: int | None = None
    hidden: int = 40
    layers: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)
    extra: tuple = ()

    def __post_init__(self):
        self.datasets = tuple(self.datasets)
        self.models = tuple(self.models)
        self.ks = tuple(int(k) for k in self.ks)
        self.pccs = tuple(float(p) for p in self.pccs)
        self.univariate_seeds = tuple(int(s) for s in self.univariate_seeds)
        self.covariate_seeds = tuple(int(s) for s in self.covariate_seeds)
        self.extra = tuple(self.extra)
        if not self.datasets or not self.models or not self.ks:
            raise ConfigurationError("grid needs datasets, models and ks")
        for model in self.models:
            if model not in MODEL_KINDS:
                raise ConfigurationError(f"unknown model kind {model!r}")
        if any(k not in (0, 1, 2, 3) for k in self.ks):
            raise ConfigurationError("grid ks must lie in 0..3")
        if any(k > 0 for k in self.ks) and not self.pccs:
            raise ConfigurationError("covariate cells need at least one pcc")
        for seeds, label in ((self.univariate_seeds, "univariate_seeds"),
                             (self.covariate_seeds, "covariate_seeds")):
            if not seeds:
                raise ConfigurationError(f"{label} must not be empty")
            if len(set(seeds)) != len(seeds):
                raise ConfigurationError(f"{label} contains duplicates")

    def _cell(self, dataset, model, **kw) -> ExperimentSpec:
        return ExperimentSpec(
            dataset=dataset, model=model,
            context_length=self.context_length, horizon=self.horizon,
            segment_length=self.segment_length if model == "seg_lstm" else None,
            hidden=self.hidden, layers=self.layers, train=self.train, **kw)

    def expand(self) -> list[ExperimentSpec]:
        specs = []
        for dataset in self.datasets:
            for model in self.models:
                for k in self.ks:
                    if k == 0:
                        for seed in self.univariate_seeds:
                            specs.append(self._cell(dataset, model, k=0,
                                                    seed=seed))
                    else:
                        for pcc in self.pccs:
                            for seed in self.covariate_seeds:
                                specs.append(self._cell(
                                    dataset, model, k=k, target_pcc=pcc,
                                    seed=seed))
        specs.extend(self.extra)
        ids = [s.experiment_id() for s in specs]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ConfigurationError(
                f"grid expands to duplicate experiments: {sorted(dupes)}")
        return specs


def _run_cell(spec: ExperimentSpec, data_dir, cells_root):
    try:
        run(spec, data_dir, cells_root)
        return spec.experiment_id(), None
    except Exception as exc:
        return spec.experiment_id(), f"{type(exc).__name__}: {exc}"


def _row_sort_key(row: dict):
    pcc = float(row["mean_pcc"]) if row["mean_pcc"] else -1.0
    return (row["dataset"], row["model"], int(row["k"]), pcc,
            row["skip_set"], int(row["seed"]))


def run_grid(grid: GridSpec, data_dir=None, out_root=".", parallelism: int = 1,
             resume: bool = True):
    """Run every pending cell, then consolidate completed rows.

    Returns (consolidated csv path, {experiment id: error} for failures).
    Completed cells (results row present, no FAILED marker) are skipped
    when ``resume`` is set, so re-running a finished grid trains nothing.
    """
    out = Path(out_root)
    cells_root = out / "cells"
    cells_root.mkdir(parents=True, exist_ok=True)
    specs = grid.expand()

    pending = []
    for spec in specs:
        cell_dir = cells_root / spec.experiment_id()
        done = (cell_dir / "results.csv").exists() and not (
            cell_dir / FAILED_MARKER).exists()
        if not (resume and done):
            pending.append(spec)

    failures: dict[str, str] = {}
    if parallelism > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = pool.map(_run_cell, pending,
                                [data_dir] * len(pending),
                                [cells_root] * len(pending))
            for experiment_id, error in outcomes:
                if error:
                    failures[experiment_id] = error
    else:
        for spec in pending:
            experiment_id, error = _run_cell(spec, data_dir, cells_root)
            if error:
                failures[experiment_id] = error

    rows = []
    for spec in specs:
        cell_dir = cells_root / spec.experiment_id()
        row_file = cell_dir / "results.csv"
        if row_file.exists() and not (cell_dir / FAILED_MARKER).exists():
            rows.extend(read_results_csv(row_file))
    rows.sort(key=_row_sort_key)
    consolidated = out / "results.csv"
    write_results_csv(consolidated, rows)
    return consolidated, failures
