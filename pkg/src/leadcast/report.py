"""Comparison tables and plot-ready files from consolidated results.

Everything lands as plain columnar CSV: a benchmark table with published
reference values and deltas, mean sMAPE per correlation level for the
covariate scenarios, and the concatenated horizon trajectories. Reference
cells are blank for datasets or scenarios the published tables don't cover.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .experiment import read_results_csv
from .reference import BENCHMARK_MODELS, reference_metrics, reference_smape

BENCHMARK_COLUMNS = [
    "dataset", "model", "n_runs",
    "smape", "smape_ci95", "ref_smape", "smape_delta",
    "mae", "ref_mae", "mae_delta",
    "rmse", "ref_rmse", "rmse_delta",
]

PCC_COLUMNS = [
    "dataset", "model", "k", "pcc", "gamma", "n_runs",
    "smape", "ref_smape", "delta",
]

TRAJECTORY_COLUMNS = ["experiment", "t", "smape_t"]


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def _ci95(values) -> float | None:
    if len(values) < 2:
        return None
    return 1.96 * float(np.std(values, ddof=1)) / math.sqrt(len(values))


def benchmark_comparison(rows) -> list[dict]:
    """Univariate means per (dataset, model) against the published table.

    Every dataset present in the rows gets one line per known benchmark
    model; models without measured runs keep their measured cells blank so
    the published context is still in the file.
    """
    measured: dict[tuple, dict[str, list]] = {}
    for row in rows:
        if int(row["k"]) != 0:
            continue
        cell = measured.setdefault((row["dataset"], row["model"]),
                                   {"smape": [], "mae": [], "rmse": []})
        for metric in ("smape", "mae", "rmse"):
            cell[metric].append(float(row[metric]))

    datasets = sorted({row["dataset"] for row in rows})
    out = []
    for dataset in datasets:
        for model in BENCHMARK_MODELS:
            try:
                ref = reference_metrics(dataset, model)
            except ConfigurationError:
                ref = {"smape": None, "mae": None, "rmse": None}
            cell = measured.get((dataset, model))
            if cell is None and all(v is None for v in ref.values()):
                continue
            line = {"dataset": dataset, "model": model,
                    "n_runs": str(len(cell["smape"])) if cell else "0"}
            for metric in ("smape", "mae", "rmse"):
                mean = float(np.mean(cell[metric])) if cell else None
                line[metric] = _fmt(mean)
                line[f"ref_{metric}"] = _fmt(ref[metric])
                delta = (mean - ref[metric]
                         if mean is not None and ref[metric] is not None
                         else None)
                line[f"{metric}_delta"] = _fmt(delta)
            line["smape_ci95"] = _fmt(_ci95(cell["smape"]) if cell else None)
            out.append(line)
    return out


def pcc_curve_table(rows) -> list[dict]:
    """Mean sMAPE per (dataset, model, k, correlation level) for k > 0.

    Cells are labeled by the realized mean PCC rounded to one decimal; the
    published covariate table supplies the reference where that level is
    one it reports.
    """
    groups: dict[tuple, dict] = {}
    for row in rows:
        k = int(row["k"])
        if k == 0 or row["skip_set"]:
            continue
        pcc = round(float(row["mean_pcc"]), 1)
        key = (row["dataset"], row["model"], k, pcc)
        group = groups.setdefault(key, {"smape": [], "gamma": row["gamma"]})
        group["smape"].append(float(row["smape"]))

    out = []
    for (dataset, model, k, pcc) in sorted(groups, key=lambda g: (g[0], g[1], g[2], -g[3])):
        group = groups[(dataset, model, k, pcc)]
        mean = float(np.mean(group["smape"]))
        ref = reference_smape(dataset, model, k, pcc)
        out.append({
            "dataset": dataset, "model": model, "k": str(k),
            "pcc": f"{pcc:.1f}", "gamma": group["gamma"],
            "n_runs": str(len(group["smape"])),
            "smape": _fmt(mean), "ref_smape": _fmt(ref),
            "delta": _fmt(mean - ref if ref is not None else None),
        })
    return out


def _trajectory_candidates(results_dir: Path, experiment_id: str):
    yield results_dir / "cells" / experiment_id / "trajectory.csv"
    yield results_dir / experiment_id / "trajectory.csv"
    yield results_dir / "trajectory.csv"


def consolidate_trajectories(results_path: Path, rows) -> list[list[str]]:
    """Concatenate each experiment's trajectory rows, where present."""
    results_dir = Path(results_path).parent
    out = []
    for row in rows:
        experiment_id = row["experiment"]
        for candidate in _trajectory_candidates(results_dir, experiment_id):
            if not candidate.is_file():
                continue
            with open(candidate, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != TRAJECTORY_COLUMNS:
                    continue
                matched = [line for line in reader
                           if line and line[0] == experiment_id]
            if matched:
                out.extend(matched)
                break
    return out


def _write(path: Path, columns, lines) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for line in lines:
            writer.writerow([line[c] for c in columns]
                            if isinstance(line, dict) else line)


def report(results_path, out_dir) -> dict:
    """Emit comparison and plot files; returns {name: written path}."""
    rows = read_results_csv(results_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    paths = {
        "benchmark": out / "benchmark_comparison.csv",
        "pcc_curves": out / "pcc_curves.csv",
        "trajectories": out / "trajectories.csv",
    }
    _write(paths["benchmark"], BENCHMARK_COLUMNS, benchmark_comparison(rows))
    _write(paths["pcc_curves"], PCC_COLUMNS, pcc_curve_table(rows))
    _write(paths["trajectories"], TRAJECTORY_COLUMNS,
           consolidate_trajectories(results_path, rows))
    return paths
