"""Published reference results the report tool compares runs against.

Four Monash benchmark datasets, five external neural baselines, and the two
models implemented here. Metric values are original-unit MAE/RMSE plus
percentage sMAPE; the univariate rows also carry the published 95%
confidence half-widths (mean of 5 runs). A None marks a cell the published
table leaves blank.
"""

from __future__ import annotations

from .errors import ConfigurationError

BENCHMARK_HORIZONS = {
    "hospital": 12,
    "tourism": 24,
    "traffic": 8,
    "electricity": 168,
}

BENCHMARK_MODELS = (
    "ffnn",
    "deepar",
    "nbeats",
    "wavenet",
    "transformer",
    "base_lstm",
    "seg_lstm",
)

# dataset -> model -> {smape, mae, rmse}
BENCHMARKS = {
    "hospital": {
        "ffnn": {"smape": 18.33, "mae": 22.86, "rmse": 27.77},
        "deepar": {"smape": 17.45, "mae": 18.25, "rmse": 22.01},
        "nbeats": {"smape": 17.77, "mae": 20.18, "rmse": 24.18},
        "wavenet": {"smape": 17.55, "mae": 19.35, "rmse": 23.38},
        "transformer": {"smape": 20.08, "mae": 36.19, "rmse": 40.48},
        "base_lstm": {"smape": 17.52, "mae": 18.03, "rmse": 22.03},
        "seg_lstm": {"smape": 18.05, "mae": 19.95, "rmse": 24.19},
    },
    "tourism": {
        "ffnn": {"smape": 20.11, "mae": 2022.21, "rmse": 2584.10},
        "deepar": {"smape": 18.35, "mae": 1871.69, "rmse": 2359.87},
        "nbeats": {"smape": 20.42, "mae": 2003.02, "rmse": 2596.21},
        "wavenet": {"smape": 18.92, "mae": 2095.13, "rmse": 2694.22},
        "transformer": {"smape": 19.75, "mae": 2146.98, "rmse": 2660.06},
        "base_lstm": {"smape": 21.50, "mae": 2336.42, "rmse": 2964.96},
        "seg_lstm": {"smape": 19.85, "mae": 1956.07, "rmse": 2413.64},
    },
    "traffic": {
        "ffnn": {"smape": 12.73, "mae": 1.15, "rmse": 1.55},
        "deepar": {"smape": 13.22, "mae": 1.18, "rmse": 1.51},
        "nbeats": {"smape": 12.40, "mae": 1.11, "rmse": 1.44},
        "wavenet": {"smape": 13.30, "mae": 1.20, "rmse": 1.61},
        "transformer": {"smape": 15.28, "mae": 1.42, "rmse": 1.94},
        "base_lstm": {"smape": 12.77, "mae": 1.15, "rmse": 1.56},
        "seg_lstm": {"smape": 12.97, "mae": 1.17, "rmse": 1.58},
    },
    "electricity": {
        "ffnn": {"smape": 23.06, "mae": 354.39, "rmse": 519.06},
        "deepar": {"smape": 20.96, "mae": 329.75, "rmse": 477.99},
        "nbeats": {"smape": 23.39, "mae": 350.37, "rmse": 510.91},
        "wavenet": {"smape": None, "mae": 286.56, "rmse": 489.91},
        "transformer": {"smape": 24.18, "mae": 398.80, "rmse": 514.68},
        "base_lstm": {"smape": 34.12, "mae": 525.50, "rmse": 675.03},
        "seg_lstm": {"smape": 21.20, "mae": 287.95, "rmse": 469.07},
    },
}

# Published 95% CI half-widths for the univariate (k=0) means of 5 runs.
UNIVARIATE_CI95 = {
    ("hospital", "base_lstm"): 0.041,
    ("hospital", "seg_lstm"): 0.135,
    ("tourism", "base_lstm"): 0.531,
    ("tourism", "seg_lstm"): 0.62,
    ("traffic", "base_lstm"): 0.065,
    ("traffic", "seg_lstm"): 0.108,
    ("electricity", "base_lstm"): 2.38,
    ("electricity", "seg_lstm"): 0.232,
}

# Covariate-scenario sMAPE: dataset -> model -> k -> {pcc: value}.
# The k=0 entry is the univariate mean, one set of runs reported across
# every PCC column.
COVARIATE_SMAPE = {
    "hospital": {
        "base_lstm": {
            0: 17.52,
            1: {1.0: 16.13, 0.9: 17.45, 0.5: 17.77},
            2: {1.0: 14.94, 0.9: 17.65, 0.5: 18.06},
            3: {1.0: 13.49, 0.9: 17.71, 0.5: 17.72},
        },
        "seg_lstm": {
            0: 18.05,
            1: {1.0: 16.07, 0.9: 17.96, 0.5: 18.09},
            2: {1.0: 17.33, 0.9: 18.49, 0.5: 18.51},
            3: {1.0: 17.71, 0.9: 17.68, 0.5: 18.77},
        },
    },
    "tourism": {
        "base_lstm": {
            0: 21.50,
            1: {1.0: 20.54, 0.9: 22.17, 0.5: 28.18},
            2: {1.0: 20.26, 0.9: 24.33, 0.5: 27.64},
            3: {1.0: 23.08, 0.9: 27.59, 0.5: 28.13},
        },
        "seg_lstm": {
            0: 19.85,
            1: {1.0: 19.14, 0.9: 20.32, 0.5: 21.56},
            2: {1.0: 19.07, 0.9: 20.49, 0.5: 21.84},
            3: {1.0: 18.61, 0.9: 19.96, 0.5: 23.06},
        },
    },
    "traffic": {
        "base_lstm": {
            0: 12.77,
            1: {1.0: 11.36, 0.9: 12.59, 0.5: 12.89},
            2: {1.0: 10.73, 0.9: 12.15, 0.5: 12.62},
            3: {1.0: 9.57, 0.9: 11.86, 0.5: 13.51},
        },
        "seg_lstm": {
            0: 12.97,
            1: {1.0: 11.64, 0.9: 12.85, 0.5: 13.00},
            2: {1.0: 11.10, 0.9: 13.12, 0.5: 12.86},
            3: {1.0: 9.88, 0.9: 11.94, 0.5: 12.90},
        },
    },
    "electricity": {
        "base_lstm": {
            0: 34.12,
            1: {1.0: 33.10, 0.9: 30.41, 0.5: 33.95},
            2: {1.0: 33.62, 0.9: 30.42, 0.5: 38.16},
            3: {1.0: 36.18, 0.9: 33.83, 0.5: 31.50},
        },
        "seg_lstm": {
            0: 21.20,
            1: {1.0: 21.01, 0.9: 22.37, 0.5: 21.45},
            2: {1.0: 21.14, 0.9: 22.48, 0.5: 22.11},
            3: {1.0: 21.61, 0.9: 23.04, 0.5: 22.20},
        },
    },
}


def reference_metrics(dataset: str, model: str) -> dict:
    """Published {smape, mae, rmse} for a benchmark cell (values may be None)."""
    try:
        return dict(BENCHMARKS[dataset][model])
    except KeyError:
        raise ConfigurationError(
            f"no reference entry for dataset {dataset!r}, model {model!r}"
        ) from None


def reference_smape(dataset: str, model: str, k: int, pcc: float | None = None):
    """Published covariate-scenario sMAPE, or None when the cell is unlisted.

    k=0 ignores ``pcc``: the univariate value is a single set of runs.
    """
    try:
        by_k = COVARIATE_SMAPE[dataset][model]
    except KeyError:
        return None
    if k == 0:
        return by_k[0]
    cell = by_k.get(k)
    if cell is None or pcc is None:
        return None
    return cell.get(round(float(pcc), 1))
