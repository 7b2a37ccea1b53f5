"""Forecast accuracy metrics and free-running evaluation.

All metrics take predictions and actuals in original units and aggregate
per series first, then across series with equal weight. sMAPE is the
symmetric percentage form bounded by [0, 200]; a term with both values
zero counts as zero error rather than poisoning the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .models import ModelConfig, forecast_batch
from .tensor import ParameterStore
from .windows import evaluation_windows, inverse_scale, scale_batch


def _paired(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch: predicted {p.shape} vs actual {a.shape}")
    if p.size == 0:
        raise ValueError("metrics need at least one prediction")
    return p, a


def mae(predicted, actual) -> float:
    """Mean absolute error."""
    p, a = _paired(predicted, actual)
    return float(np.abs(p - a).mean())


def rmse(predicted, actual) -> float:
    """Root mean squared error."""
    p, a = _paired(predicted, actual)
    return float(np.sqrt(np.square(p - a).mean()))


def _smape_terms(p: np.ndarray, a: np.ndarray) -> np.ndarray:
    num = np.abs(p - a)
    den = (np.abs(p) + np.abs(a)) / 2.0
    terms = np.zeros_like(num)
    np.divide(num, den, out=terms, where=den > 0)
    return terms


def smape(predicted, actual) -> float:
    """Symmetric mean absolute percentage error, in percent.

    Each term is |p - a| / ((|p| + |a|) / 2); a position where both values
    are zero contributes 0. The result lies in [0, 200].
    """
    p, a = _paired(predicted, actual)
    return float(100.0 * _smape_terms(p, a).mean())


def horizon_trajectory(predicted, actual) -> np.ndarray:
    """Mean sMAPE over forecast prefixes of length 1 .. H.

    ``predicted`` and ``actual`` are [n_series, H]. Element t - 1 of the
    result is the across-series mean of sMAPE restricted to the first t
    forecast steps, so the last element equals the dataset sMAPE.
    """
    p, a = _paired(predicted, actual)
    if p.ndim != 2:
        raise ValueError(f"expected [n_series, horizon] arrays, got shape {p.shape}")
    n, horizon = p.shape
    out = np.empty(horizon)
    for t in range(1, horizon + 1):
        out[t - 1] = np.mean([smape(p[i, :t], a[i, :t]) for i in range(n)])
    return out


@dataclass
class MetricsReport:
    """Per-series and dataset-level accuracy for one evaluation pass.

    ``n_series`` counts every series that was forecast; the dataset means
    cover ``n_series - n_excluded`` of them (series whose forecast came
    back non-finite are flagged and dropped, never averaged). ``skipped``
    lists series too short to carry an evaluation window at all.
    """

    split: str
    series_ids: tuple
    per_series_mae: np.ndarray
    per_series_rmse: np.ndarray
    per_series_smape: np.ndarray
    mae: float
    rmse: float
    smape: float
    trajectory: np.ndarray
    context_length: int
    horizon: int
    n_series: int
    n_excluded: int = 0
    excluded: tuple = ()
    skipped: tuple = ()
    metadata: dict = field(default_factory=dict)

    def summary(self) -> str:
        return (
            f"{self.split}: sMAPE {self.smape:.2f}  MAE {self.mae:.4g}  "
            f"RMSE {self.rmse:.4g}  ({self.n_series} series, "
            f"{self.n_excluded} excluded)"
        )


# Fraction of forecast series allowed to come back non-finite before the
# whole evaluation is treated as broken rather than patched over.
MAX_EXCLUDED_FRACTION = 0.01


def forecast_report(predicted, actual, series_ids, split: str,
                    context_length: int, horizon: int,
                    skipped=(), metadata=None) -> MetricsReport:
    """Aggregate per-series forecasts into a MetricsReport.

    ``predicted`` and ``actual`` are [n_series, H] in original units.
    Rows with any non-finite prediction are excluded from every mean and
    listed; more than MAX_EXCLUDED_FRACTION of them fails the run.
    """
    p, a = _paired(predicted, actual)
    if p.ndim != 2:
        raise ValueError(f"expected [n_series, horizon] arrays, got shape {p.shape}")
    ids = tuple(series_ids)
    if len(ids) != p.shape[0]:
        raise ValueError(f"{len(ids)} series ids for {p.shape[0]} forecast rows")
    if not np.isfinite(a).all():
        raise DataError("actual values contain non-finite entries")

    keep = np.isfinite(p).all(axis=1)
    excluded = tuple(sid for sid, ok in zip(ids, keep) if not ok)
    n_total = p.shape[0]
    if len(excluded) > MAX_EXCLUDED_FRACTION * n_total:
        raise DataError(
            f"{len(excluded)} of {n_total} series produced non-finite "
            f"forecasts (> {MAX_EXCLUDED_FRACTION:.0%}): {list(excluded)}"
        )
    p, a = p[keep], a[keep]
    kept_ids = tuple(sid for sid, ok in zip(ids, keep) if ok)

    per_mae = np.array([mae(p[i], a[i]) for i in range(p.shape[0])])
    per_rmse = np.array([rmse(p[i], a[i]) for i in range(p.shape[0])])
    per_smape = np.array([smape(p[i], a[i]) for i in range(p.shape[0])])
    return MetricsReport(
        split=split,
        series_ids=kept_ids,
        per_series_mae=per_mae,
        per_series_rmse=per_rmse,
        per_series_smape=per_smape,
        mae=float(np.mean(per_mae)),
        rmse=float(np.mean(per_rmse)),
        smape=float(np.mean(per_smape)),
        trajectory=horizon_trajectory(p, a),
        context_length=context_length,
        horizon=horizon,
        n_series=n_total,
        n_excluded=len(excluded),
        excluded=excluded,
        skipped=tuple(skipped),
        metadata=dict(metadata or {}),
    )


def evaluate(params: ParameterStore, config: ModelConfig, series_list,
             context_length: int, horizon: int, split: str = "test",
             metadata=None) -> MetricsReport:
    """Free-run the model over one window per series and score channel 0.

    Each eligible series contributes the window ending at its ``split``
    boundary. Forecasts run autoregressively in scaled space with no
    ground truth past the context, and only the target channel of the
    joint prediction is compared, back in original units.
    """
    batch, skipped = evaluation_windows(series_list, context_length, horizon,
                                        split)
    scaled = scale_batch(batch)
    preds = forecast_batch(scaled, params, config)
    y_hat = inverse_scale(preds[:, :, 0], scaled.scales)
    y_true = batch.inputs[:, context_length:, 0]
    ids = tuple(series_list[i].series_id for i in batch.series_indices)
    return forecast_report(y_hat, y_true, ids, split, context_length, horizon,
                           skipped=skipped, metadata=metadata)
