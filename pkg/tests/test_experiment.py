"""End-to-end pipeline tests: specs, grids, artifacts, reports, CLI.

Everything trains against a tiny synthetic corpus written to disk, so the
full ingest -> augment -> fit -> evaluate -> report chain runs in a few
seconds. Determinism checks compare the canonical results row (every column
except the wall time) across repeat and parallel runs.
"""

import os
import textwrap

import numpy as np
import pytest

from leadcast import __version__
from leadcast.augment import GAMMA_GRID
from leadcast.cli import main
from leadcast.config import (
    grid_from_mapping,
    load_experiment_config,
    load_grid_config,
    spec_from_mapping,
)
from leadcast.errors import ConfigurationError, DataError
from leadcast.experiment import (
    FAILED_MARKER,
    RESULT_COLUMNS,
    ExperimentSpec,
    GridSpec,
    canonical_row,
    read_results_csv,
    resolve_shape,
    run,
    run_grid,
    write_results_csv,
)
from leadcast.models import load_checkpoint
from leadcast.report import benchmark_comparison, pcc_curve_table, report
from leadcast.train import TrainConfig

from helpers import write_tsf

C, H = 8, 4


def quick_train(**overrides):
    fields = dict(epochs=2, batch_size=4, batches_per_epoch=2, dropout=0.0)
    fields.update(overrides)
    return TrainConfig(**fields)


def quick_spec(**overrides):
    fields = dict(dataset="synthetic", model="base_lstm", context_length=C,
                  horizon=H, hidden=6, layers=1, train=quick_train())
    fields.update(overrides)
    return ExperimentSpec(**fields)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_tsf(root / "synthetic.tsf", n_series=8, length=60, horizon=H)
    return root


@pytest.fixture(scope="module")
def finished_run(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    spec = quick_spec()
    metrics = run(spec, data_dir=corpus_dir, out_root=out)
    return spec, out / spec.experiment_id(), metrics


@pytest.fixture(scope="module")
def quick_grid():
    return GridSpec(datasets=("synthetic",), models=("base_lstm",),
                    ks=(0, 1), pccs=(1.0,), univariate_seeds=(1, 2),
                    covariate_seeds=(1,), context_length=C, horizon=H,
                    hidden=6, layers=1, train=quick_train())


@pytest.fixture(scope="module")
def finished_grid(corpus_dir, quick_grid, tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    consolidated, failures = run_grid(quick_grid, data_dir=corpus_dir,
                                      out_root=out)
    return out, consolidated, failures


# ----------------------------------------------------------------------------
# Specs and shapes


class TestExperimentSpec:
    def test_univariate_id(self):
        spec = ExperimentSpec(dataset="hospital", model="base_lstm", seed=3)
        assert spec.experiment_id() == "hospital-base_lstm-k0-s3"

    def test_target_pcc_id(self):
        spec = ExperimentSpec(dataset="hospital", model="seg_lstm", k=3,
                              target_pcc=0.9)
        assert spec.experiment_id() == "hospital-seg_lstm-k3-pcc0.9-s1"

    def test_gamma_and_skip_id(self):
        spec = ExperimentSpec(dataset="traffic", model="base_lstm", k=3,
                              gamma=0.4, skip_set={2, 1}, seed=7)
        assert spec.experiment_id() == "traffic-base_lstm-k3-g0.4-skip1+2-s7"

    def test_whole_pcc_drops_trailing_zero(self):
        spec = ExperimentSpec(dataset="hospital", model="base_lstm", k=1,
                              target_pcc=1.0)
        assert spec.experiment_id() == "hospital-base_lstm-k1-pcc1-s1"

    @pytest.mark.parametrize("overrides", [
        {"dataset": ""},
        {"model": "gru"},
        {"k": 4},
        {"target_pcc": 0.9},
        {"gamma": 0.3},
        {"skip_set": {1}},
        {"k": 2, "target_pcc": 0.9, "gamma": 0.3},
        {"k": 2},
        {"k": 2, "target_pcc": 0.0},
        {"k": 2, "target_pcc": 1.2},
        {"k": 2, "gamma": -0.1},
        {"k": 2, "target_pcc": 1.0, "skip_set": {3}},
        {"k": 1, "target_pcc": 1.0, "skip_set": {1}},
        {"segment_length": 4},
    ])
    def test_rejects_bad_fields(self, overrides):
        fields = dict(dataset="hospital", model="base_lstm")
        fields.update(overrides)
        with pytest.raises(ConfigurationError):
            ExperimentSpec(**fields)


class TestResolveShape:
    @pytest.mark.parametrize("dataset,model,expected", [
        ("hospital", "base_lstm", (15, 12, 1)),
        ("hospital", "seg_lstm", (36, 12, 12)),
        ("tourism", "seg_lstm", (36, 24, 12)),
        ("traffic", "base_lstm", (65, 8, 1)),
        ("traffic", "seg_lstm", (64, 8, 8)),
        ("electricity", "base_lstm", (210, 168, 1)),
        ("electricity", "seg_lstm", (72, 168, 24)),
    ])
    def test_dataset_conventions(self, dataset, model, expected):
        spec = ExperimentSpec(dataset=dataset, model=model)
        assert resolve_shape(spec) == expected

    def test_unknown_dataset_needs_explicit_shape(self):
        with pytest.raises(ConfigurationError):
            resolve_shape(ExperimentSpec(dataset="synthetic",
                                         model="base_lstm"))
        spec = ExperimentSpec(dataset="synthetic", model="seg_lstm",
                              context_length=8, horizon=4, segment_length=4)
        assert resolve_shape(spec) == (8, 4, 4)

    def test_partial_override_keeps_other_conventions(self):
        spec = ExperimentSpec(dataset="hospital", model="seg_lstm", horizon=24)
        assert resolve_shape(spec) == (36, 24, 12)

    def test_misaligned_segments_rejected(self):
        spec = ExperimentSpec(dataset="synthetic", model="seg_lstm",
                              context_length=9, horizon=4, segment_length=4)
        with pytest.raises(ConfigurationError):
            resolve_shape(spec)

    def test_base_model_ignores_segment_convention(self):
        spec = ExperimentSpec(dataset="synthetic", model="base_lstm",
                              context_length=9, horizon=4)
        assert resolve_shape(spec) == (9, 4, 1)


class TestGridSpec:
    def test_single_dataset_default_grid(self):
        grid = GridSpec(datasets=("hospital",))
        specs = grid.expand()
        # 2 models x (5 univariate seeds + 3 ks x 3 pccs x 1 seed)
        assert len(specs) == 28
        ids = [s.experiment_id() for s in specs]
        assert len(set(ids)) == 28
        assert ids[0] == "hospital-base_lstm-k0-s1"
        univariate = [s for s in specs if s.k == 0]
        assert len(univariate) == 10
        assert all(s.target_pcc is not None for s in specs if s.k > 0)

    def test_expansion_order_is_dataset_model_k(self):
        grid = GridSpec(datasets=("a", "b"), models=("base_lstm",),
                        ks=(0,), univariate_seeds=(1,))
        assert [s.dataset for s in grid.expand()] == ["a", "b"]

    def test_extra_specs_appended(self):
        probe = ExperimentSpec(dataset="hospital", model="base_lstm", k=3,
                               target_pcc=1.0, skip_set={2}, seed=42)
        grid = GridSpec(datasets=("hospital",), models=("base_lstm",),
                        ks=(0,), univariate_seeds=(1,), extra=(probe,))
        specs = grid.expand()
        assert specs[-1] is probe

    def test_duplicate_cells_rejected(self):
        dupe = ExperimentSpec(dataset="hospital", model="base_lstm", seed=1)
        grid = GridSpec(datasets=("hospital",), models=("base_lstm",),
                        ks=(0,), univariate_seeds=(1,), extra=(dupe,))
        with pytest.raises(ConfigurationError):
            grid.expand()

    @pytest.mark.parametrize("overrides", [
        {"datasets": ()},
        {"models": ("gru",)},
        {"ks": (0, 5)},
        {"ks": (1,), "pccs": ()},
        {"univariate_seeds": ()},
        {"univariate_seeds": (1, 1)},
        {"covariate_seeds": (2, 2)},
    ])
    def test_rejects_bad_fields(self, overrides):
        fields = dict(datasets=("hospital",))
        fields.update(overrides)
        with pytest.raises(ConfigurationError):
            GridSpec(**fields)


# ----------------------------------------------------------------------------
# Results CSV


def result_row(**overrides):
    row = {
        "experiment": "hospital-base_lstm-k0-s1",
        "dataset": "hospital", "model": "base_lstm", "k": "0",
        "skip_set": "", "gamma": "", "mean_pcc": "", "seed": "1",
        "C": "15", "H": "12", "d": "1",
        "smape": "17.0", "mae": "18.0", "rmse": "22.0",
        "n_series": "767", "n_excluded": "0", "best_epoch": "41",
        "train_seconds": "12.5", "config_hash": "0123456789ab",
        "code_version": __version__,
    }
    row.update(overrides)
    return row


class TestResultsCsv:
    def test_round_trip(self, tmp_path):
        rows = [result_row(), result_row(seed="2", smape="17.4",
                                         experiment="hospital-base_lstm-k0-s2")]
        path = tmp_path / "results.csv"
        write_results_csv(path, rows)
        assert read_results_csv(path) == rows

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("dataset,model\nhospital,base_lstm\n")
        with pytest.raises(DataError):
            read_results_csv(path)

    def test_canonical_row_ignores_wall_time(self):
        a, b = result_row(train_seconds="1.0"), result_row(train_seconds="9.0")
        assert canonical_row(a) == canonical_row(b)
        assert len(canonical_row(a)) == len(RESULT_COLUMNS) - 1
        assert canonical_row(result_row(smape="18.0")) != canonical_row(a)


# ----------------------------------------------------------------------------
# Single-cell pipeline


class TestRunPipeline:
    def test_artifacts_written(self, finished_run):
        _, cell_dir, _ = finished_run
        for name in ("results.csv", "trajectory.csv", "fit_report.csv",
                     "checkpoint.bin"):
            assert (cell_dir / name).is_file()
        assert not (cell_dir / FAILED_MARKER).exists()

    def test_results_row_contents(self, finished_run):
        spec, cell_dir, metrics = finished_run
        (row,) = read_results_csv(cell_dir / "results.csv")
        assert row["experiment"] == spec.experiment_id()
        assert row["dataset"] == "synthetic"
        assert (row["k"], row["gamma"], row["mean_pcc"]) == ("0", "", "")
        assert (row["C"], row["H"], row["d"]) == (str(C), str(H), "1")
        assert float(row["smape"]) == metrics.smape
        assert float(row["mae"]) == metrics.mae
        assert row["n_series"] == "8"
        assert row["n_excluded"] == "0"
        assert int(row["best_epoch"]) >= 1
        assert float(row["train_seconds"]) > 0
        assert len(row["config_hash"]) == 12
        assert row["code_version"] == __version__

    def test_trajectory_ends_at_reported_smape(self, finished_run):
        spec, cell_dir, metrics = finished_run
        lines = (cell_dir / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "experiment,t,smape_t"
        body = [line.split(",") for line in lines[1:]]
        assert [int(parts[1]) for parts in body] == list(range(1, H + 1))
        assert all(parts[0] == spec.experiment_id() for parts in body)
        assert float(body[-1][2]) == metrics.smape

    def test_fit_report_has_one_line_per_epoch(self, finished_run):
        _, cell_dir, _ = finished_run
        lines = (cell_dir / "fit_report.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,lr,seconds"
        assert len(lines) == 1 + quick_train().epochs

    def test_checkpoint_reloads(self, finished_run):
        spec, cell_dir, _ = finished_run
        params, config, extra = load_checkpoint(cell_dir / "checkpoint.bin")
        assert config.kind == "base_lstm"
        assert config.hidden == 6
        assert extra["experiment"] == spec.experiment_id()
        assert extra["best_epoch"] >= 1
        assert len(extra["config_hash"]) == 12
        assert all(np.all(np.isfinite(t.data)) for _, t in params.items())

    def test_rerun_is_bitwise_identical(self, corpus_dir, tmp_path):
        spec = quick_spec(seed=2)
        rows, trajectories = [], []
        for name in ("first", "second"):
            run(spec, data_dir=corpus_dir, out_root=tmp_path / name)
            cell_dir = tmp_path / name / spec.experiment_id()
            rows.append(read_results_csv(cell_dir / "results.csv")[0])
            trajectories.append((cell_dir / "trajectory.csv").read_text())
        assert canonical_row(rows[0]) == canonical_row(rows[1])
        assert trajectories[0] == trajectories[1]

    def test_covariate_run_records_gamma_and_pcc(self, corpus_dir, tmp_path):
        spec = quick_spec(k=2, target_pcc=1.0)
        run(spec, data_dir=corpus_dir, out_root=tmp_path)
        (row,) = read_results_csv(
            tmp_path / spec.experiment_id() / "results.csv")
        assert row["k"] == "2"
        assert float(row["gamma"]) in GAMMA_GRID
        # A perfect-correlation target is met exactly by the noiseless rung.
        assert float(row["gamma"]) == 0.0
        assert float(row["mean_pcc"]) == pytest.approx(1.0, abs=1e-9)

    def test_skip_set_recorded_and_modeled(self, corpus_dir, tmp_path):
        spec = quick_spec(k=2, gamma=0.0, skip_set={1})
        run(spec, data_dir=corpus_dir, out_root=tmp_path)
        cell_dir = tmp_path / spec.experiment_id()
        assert cell_dir.name.endswith("-k2-g0-skip1-s1")
        (row,) = read_results_csv(cell_dir / "results.csv")
        assert row["skip_set"] == "1"
        _, config, _ = load_checkpoint(cell_dir / "checkpoint.bin")
        assert config.n_covariates == 1

    def test_segment_model_pipeline(self, corpus_dir, tmp_path):
        spec = quick_spec(model="seg_lstm", segment_length=4)
        run(spec, data_dir=corpus_dir, out_root=tmp_path)
        (row,) = read_results_csv(
            tmp_path / spec.experiment_id() / "results.csv")
        assert row["d"] == "4"
        assert np.isfinite(float(row["smape"]))

    def test_failure_leaves_marker_and_raises(self, corpus_dir, tmp_path):
        spec = quick_spec(dataset="absent")
        with pytest.raises(ConfigurationError):
            run(spec, data_dir=corpus_dir, out_root=tmp_path)
        marker = tmp_path / spec.experiment_id() / FAILED_MARKER
        assert marker.is_file()
        assert "ConfigurationError" in marker.read_text()

    def test_success_clears_stale_marker(self, corpus_dir, tmp_path):
        spec = quick_spec(seed=3)
        cell_dir = tmp_path / spec.experiment_id()
        cell_dir.mkdir()
        (cell_dir / FAILED_MARKER).write_text("DataError: earlier attempt\n")
        run(spec, data_dir=corpus_dir, out_root=tmp_path)
        assert not (cell_dir / FAILED_MARKER).exists()
        assert (cell_dir / "results.csv").is_file()


# ----------------------------------------------------------------------------
# Grids


class TestRunGrid:
    def test_consolidated_rows_sorted(self, finished_grid):
        out, consolidated, failures = finished_grid
        assert failures == {}
        assert consolidated == out / "results.csv"
        rows = read_results_csv(consolidated)
        assert [row["experiment"] for row in rows] == [
            "synthetic-base_lstm-k0-s1",
            "synthetic-base_lstm-k0-s2",
            "synthetic-base_lstm-k1-pcc1-s1",
        ]
        for row in rows:
            assert (out / "cells" / row["experiment"] / "results.csv").is_file()

    def test_resume_skips_completed_cells(self, corpus_dir, quick_grid,
                                          finished_grid):
        out, consolidated, _ = finished_grid
        cell_files = sorted((out / "cells").glob("*/results.csv"))
        before = [(p, p.stat().st_mtime_ns) for p in cell_files]
        text = consolidated.read_text()
        _, failures = run_grid(quick_grid, data_dir=corpus_dir, out_root=out)
        assert failures == {}
        assert [(p, p.stat().st_mtime_ns) for p in cell_files] == before
        assert consolidated.read_text() == text

    def test_parallel_runs_match_sequential(self, corpus_dir, quick_grid,
                                            finished_grid, tmp_path):
        _, consolidated, _ = finished_grid
        parallel_csv, failures = run_grid(quick_grid, data_dir=corpus_dir,
                                          out_root=tmp_path, parallelism=2)
        assert failures == {}
        sequential = [canonical_row(r) for r in read_results_csv(consolidated)]
        parallel = [canonical_row(r) for r in read_results_csv(parallel_csv)]
        assert parallel == sequential

    def test_failed_cell_reported_but_grid_completes(self, corpus_dir,
                                                     tmp_path):
        probe = quick_spec(dataset="absent", seed=9)
        grid = GridSpec(datasets=("synthetic",), models=("base_lstm",),
                        ks=(0,), univariate_seeds=(1,), context_length=C,
                        horizon=H, hidden=6, layers=1, train=quick_train(),
                        extra=(probe,))
        consolidated, failures = run_grid(grid, data_dir=corpus_dir,
                                          out_root=tmp_path)
        assert set(failures) == {probe.experiment_id()}
        assert "ConfigurationError" in failures[probe.experiment_id()]
        marker = tmp_path / "cells" / probe.experiment_id() / FAILED_MARKER
        assert marker.is_file()
        rows = read_results_csv(consolidated)
        assert [row["experiment"] for row in rows] == [
            "synthetic-base_lstm-k0-s1"]


# ----------------------------------------------------------------------------
# Report tables


class TestReport:
    def test_unknown_dataset_gets_blank_references(self, finished_grid):
        _, consolidated, _ = finished_grid
        rows = read_results_csv(consolidated)
        lines = benchmark_comparison(rows)
        assert len(lines) == 1
        (line,) = lines
        assert (line["dataset"], line["model"]) == ("synthetic", "base_lstm")
        assert line["n_runs"] == "2"
        smapes = [float(r["smape"]) for r in rows if r["k"] == "0"]
        assert float(line["smape"]) == float(np.mean(smapes))
        assert line["smape_ci95"] != ""
        assert line["ref_smape"] == ""
        assert line["smape_delta"] == ""

    def test_benchmark_deltas_against_references(self):
        rows = [
            result_row(smape="17.0", mae="18.0", rmse="22.0"),
            result_row(seed="2", smape="18.0", mae="19.0", rmse="23.0",
                       experiment="hospital-base_lstm-k0-s2"),
        ]
        lines = benchmark_comparison(rows)
        # One line per published model, measured cells only where runs exist.
        assert len(lines) == 7
        by_model = {line["model"]: line for line in lines}
        ours = by_model["base_lstm"]
        assert ours["n_runs"] == "2"
        assert float(ours["smape"]) == 17.5
        assert float(ours["ref_smape"]) == 17.52
        assert float(ours["smape_delta"]) == pytest.approx(-0.02)
        assert float(ours["mae_delta"]) == pytest.approx(18.5 - 18.03)
        deepar = by_model["deepar"]
        assert deepar["n_runs"] == "0"
        assert deepar["smape"] == ""
        assert float(deepar["ref_smape"]) == 17.45

    def test_pcc_curves_grouped_and_sorted(self):
        def covariate_row(seed, pcc, smape, gamma="0.4"):
            return result_row(
                experiment=f"hospital-base_lstm-k3-pcc{pcc}-s{seed}",
                k="3", seed=seed, gamma=gamma, mean_pcc=pcc, smape=smape)

        rows = [
            covariate_row("1", "0.98", "13.0"),
            covariate_row("2", "1.0", "13.4", gamma="0.0"),
            covariate_row("1", "0.52", "17.5"),
            result_row(),  # univariate rows stay out of the curve table
            result_row(experiment="hospital-base_lstm-k3-g0.4-skip1-s1",
                       k="3", gamma="0.4", mean_pcc="0.97", skip_set="1"),
        ]
        lines = pcc_curve_table(rows)
        assert [line["pcc"] for line in lines] == ["1.0", "0.5"]
        top, bottom = lines
        assert top["n_runs"] == "2"
        assert float(top["smape"]) == pytest.approx((13.0 + 13.4) / 2)
        assert float(top["ref_smape"]) == 13.49
        assert float(top["delta"]) == pytest.approx(13.2 - 13.49)
        assert float(bottom["ref_smape"]) == 17.72
        assert bottom["n_runs"] == "1"

    def test_report_consolidates_grid_trajectories(self, finished_grid,
                                                   tmp_path):
        _, consolidated, _ = finished_grid
        paths = report(consolidated, tmp_path)
        for path in paths.values():
            assert path.is_file()
        lines = paths["trajectories"].read_text().splitlines()
        assert lines[0] == "experiment,t,smape_t"
        assert len(lines) == 1 + 3 * H
        rows = read_results_csv(consolidated)
        last = {parts[0]: float(parts[2])
                for parts in (line.split(",") for line in lines[1:])
                if int(parts[1]) == H}
        for row in rows:
            assert last[row["experiment"]] == float(row["smape"])
        curve_lines = paths["pcc_curves"].read_text().splitlines()
        assert len(curve_lines) == 2
        assert curve_lines[1].startswith("synthetic,base_lstm,1,1.0")

    def test_malformed_results_rejected(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("dataset,smape\nhospital,17.0\n")
        with pytest.raises(DataError):
            report(path, tmp_path / "out")


# ----------------------------------------------------------------------------
# Config files


class TestConfigLoading:
    def test_run_config_round_trip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(textwrap.dedent("""\
            dataset: hospital
            model: seg_lstm
            k: 3
            target_pcc: 0.9
            skip: [1, 3]
            seed: 7
            hidden: 24
            train:
              epochs: 5
              dropout: 0.2
            data_dir: /data/tsf
        """))
        spec, data_dir = load_experiment_config(path)
        assert spec.dataset == "hospital"
        assert spec.model == "seg_lstm"
        assert (spec.k, spec.target_pcc, spec.seed) == (3, 0.9, 7)
        assert spec.skip_set == frozenset({1, 3})
        assert spec.hidden == 24
        assert spec.train.epochs == 5
        assert spec.train.dropout == 0.2
        assert spec.train.batch_size == TrainConfig().batch_size
        assert data_dir == "/data/tsf"

    def test_missing_train_section_uses_defaults(self):
        spec = spec_from_mapping({"dataset": "hospital", "model": "base_lstm"})
        assert spec.train == TrainConfig()

    @pytest.mark.parametrize("doc,match", [
        ({"dataset": "hospital", "model": "base_lstm", "contex_length": 9},
         "unknown run config keys"),
        ({"dataset": "hospital", "model": "base_lstm",
          "train": {"epochs": 5, "lr": 0.1}}, "unknown train keys"),
        ({"dataset": "hospital", "model": "base_lstm", "skip": 2},
         "'skip' must be a list"),
    ])
    def test_bad_run_configs_rejected(self, doc, match):
        with pytest.raises(ConfigurationError, match=match):
            spec_from_mapping(doc)

    def test_grid_config_round_trip(self, tmp_path):
        path = tmp_path / "grid.yaml"
        path.write_text(textwrap.dedent("""\
            datasets: [hospital, traffic]
            models: [seg_lstm]
            k: [0, 3]
            pcc: [1.0, 0.5]
            univariate_seeds: [1, 2, 3]
            covariate_seeds: [4]
            train:
              epochs: 9
            extra:
              - dataset: hospital
                model: seg_lstm
                k: 3
                gamma: 0.2
                seed: 42
            data_dir: /data/tsf
        """))
        grid, data_dir = load_grid_config(path)
        assert grid.datasets == ("hospital", "traffic")
        assert grid.ks == (0, 3)
        assert grid.pccs == (1.0, 0.5)
        assert grid.univariate_seeds == (1, 2, 3)
        assert grid.train.epochs == 9
        assert data_dir == "/data/tsf"
        # The probe entry inherits the grid-level training recipe.
        assert grid.extra[0].gamma == 0.2
        assert grid.extra[0].train.epochs == 9
        assert len(grid.expand()) == 2 * (3 + 2) + 1

    def test_extra_entry_may_override_train(self):
        grid = grid_from_mapping({
            "datasets": ["hospital"],
            "train": {"epochs": 9},
            "extra": [{"dataset": "hospital", "model": "base_lstm",
                       "seed": 42, "train": {"epochs": 3}}],
        })
        assert grid.extra[0].train.epochs == 3

    @pytest.mark.parametrize("doc,match", [
        ({"datasets": ["hospital"], "modles": ["base_lstm"]},
         "unknown grid config keys"),
        ({"datasets": ["hospital"], "extra": {"dataset": "hospital"}},
         "'extra' must be a list"),
        ({"datasets": ["hospital"],
          "extra": [{"dataset": "hospital", "model": "base_lstm",
                     "data_dir": "/tmp"}]},
         "data_dir belongs at the top level"),
    ])
    def test_bad_grid_configs_rejected(self, doc, match):
        with pytest.raises(ConfigurationError, match=match):
            grid_from_mapping(doc)

    def test_non_mapping_document_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- just\n- a\n- list\n")
        with pytest.raises(ConfigurationError, match="key-value mapping"):
            load_experiment_config(path)


# ----------------------------------------------------------------------------
# Command line


def run_config_text(**overrides):
    fields = dict(dataset="synthetic", model="base_lstm", context_length=C,
                  horizon=H, hidden=6, layers=1)
    fields.update(overrides)
    lines = [f"{key}: {value}" for key, value in fields.items()]
    lines += ["train:", "  epochs: 2", "  batch_size: 4",
              "  batches_per_epoch: 2", "  dropout: 0.0"]
    return "\n".join(lines) + "\n"


class TestCli:
    def test_ingest_summarizes_corpus(self, corpus_dir, capsys):
        assert main(["ingest", str(corpus_dir / "synthetic.tsf")]) == 0
        out = capsys.readouterr().out
        assert "synthetic" in out
        assert "series:" in out and "8" in out

    def test_run_writes_artifacts(self, corpus_dir, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text(run_config_text(seed=5))
        out_root = tmp_path / "runs"
        code = main(["run", str(config), "--data-dir", str(corpus_dir),
                     "--out", str(out_root)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "sMAPE" in printed and "artifacts:" in printed
        assert (out_root / "synthetic-base_lstm-k0-s5" / "results.csv").is_file()

    def test_data_dir_env_fallback(self, corpus_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("LEADCAST_DATA_DIR", str(corpus_dir))
        config = tmp_path / "run.yaml"
        config.write_text(run_config_text(seed=6))
        assert main(["run", str(config), "--out", str(tmp_path / "runs")]) == 0

    def test_missing_data_dir_is_config_error(self, tmp_path, monkeypatch,
                                              capsys):
        monkeypatch.delenv("LEADCAST_DATA_DIR", raising=False)
        config = tmp_path / "run.yaml"
        config.write_text(run_config_text())
        assert main(["run", str(config), "--out", str(tmp_path)]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_unknown_config_key_is_config_error(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text("dataset: synthetic\nmodle: base_lstm\n")
        assert main(["run", str(config), "--out", str(tmp_path)]) == 2
        assert "unknown run config keys" in capsys.readouterr().err

    def test_short_series_failure_exits_one(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        # Too short for even one training window at this context + horizon.
        write_tsf(data / "synthetic.tsf", n_series=4, length=15, horizon=H)
        config = tmp_path / "run.yaml"
        config.write_text(run_config_text())
        out_root = tmp_path / "runs"
        code = main(["run", str(config), "--data-dir", str(data),
                     "--out", str(out_root)])
        assert code == 1
        assert "error:" in capsys.readouterr().err
        marker = out_root / "synthetic-base_lstm-k0-s1" / FAILED_MARKER
        assert marker.is_file()

    def test_grid_and_report_commands(self, corpus_dir, tmp_path, capsys):
        config = tmp_path / "grid.yaml"
        config.write_text(textwrap.dedent(f"""\
            datasets: [synthetic]
            models: [base_lstm]
            k: [0]
            univariate_seeds: [1]
            context_length: {C}
            horizon: {H}
            hidden: 6
            layers: 1
            train:
              epochs: 2
              batch_size: 4
              batches_per_epoch: 2
              dropout: 0.0
        """))
        out_root = tmp_path / "grid-out"
        code = main(["grid", str(config), "--data-dir", str(corpus_dir),
                     "--out", str(out_root)])
        assert code == 0
        assert (out_root / "results.csv").is_file()
        capsys.readouterr()

        report_dir = tmp_path / "report"
        code = main(["report", str(out_root / "results.csv"),
                     "--out", str(report_dir)])
        assert code == 0
        assert (report_dir / "benchmark_comparison.csv").is_file()
        assert (report_dir / "trajectories.csv").is_file()

    def test_grid_failure_exits_one(self, corpus_dir, tmp_path, capsys):
        config = tmp_path / "grid.yaml"
        config.write_text(textwrap.dedent(f"""\
            datasets: [synthetic]
            models: [base_lstm]
            k: [0]
            univariate_seeds: [1]
            context_length: {C}
            horizon: {H}
            hidden: 6
            layers: 1
            train:
              epochs: 2
              batch_size: 4
              batches_per_epoch: 2
              dropout: 0.0
            extra:
              - dataset: absent
                model: base_lstm
                context_length: {C}
                horizon: {H}
        """))
        code = main(["grid", str(config), "--data-dir", str(corpus_dir),
                     "--out", str(tmp_path / "out")])
        assert code == 1
        err = capsys.readouterr().err
        assert "FAILED absent-base_lstm-k0-s1" in err
