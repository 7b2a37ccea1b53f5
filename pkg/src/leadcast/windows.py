"""Chronological splits, training/evaluation windows, and window scaling.

Every window spans C + H consecutive positions of the joint vector
z_t = (y_t, x_t^1, ..). Teacher-forcing targets are the window shifted left
by one step, so the final position has no target and is always masked; a
covariate target cell is likewise masked wherever its ground truth is
undefined (leads run out near the series end).

Split protocol: the last H values of a series are the test region, the H
before them the validation region, and training windows must fit entirely
inside the remaining prefix. A training window therefore needs
T >= C + 3H, a validation window T >= C + 2H and a test window T >= C + H;
series that fall short are skipped with a report, never padded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .tsf import DatasetPolicy


@dataclass(frozen=True)
class SplitSpec:
    """Exclusive end indices of the three chronological regions."""

    train_end: int
    val_end: int
    test_end: int


def chronological_split(length: int, horizon: int) -> SplitSpec:
    """Partition a series of ``length`` values into train/val/test regions."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if length < 2 * horizon + 1:
        raise DataError(
            f"series of length {length} cannot hold two horizons of {horizon}"
        )
    return SplitSpec(
        train_end=length - 2 * horizon,
        val_end=length - horizon,
        test_end=length,
    )


@dataclass
class WindowBatch:
    """A batch of fixed-length windows plus teacher-forcing targets.

    ``inputs`` is [B, C+H, F]; the first 1 + len(leads) channels are z, any
    further channel is an appended feature (log scale). ``targets`` and
    ``loss_mask`` are [B, C+H, 1 + len(leads)]: the mask is 0 at the final
    step of each window and wherever a covariate target is undefined.
    """

    inputs: np.ndarray
    targets: np.ndarray
    scales: np.ndarray
    loss_mask: np.ndarray
    context_length: int
    horizon: int
    series_indices: np.ndarray
    leads: tuple
    scaled: bool = False

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]


def _joint(series) -> np.ndarray:
    return np.concatenate([series.y[:, None], series.X], axis=1)


def _extract(series_list, pairs, C: int, H: int, require_full_inputs: bool):
    lead_sets = {s.leads for s in series_list}
    if len(lead_sets) != 1:
        raise DataError(f"series disagree on covariate leads: {lead_sets}")
    (leads,) = lead_sets
    L = C + H
    width = 1 + len(leads)
    B = len(pairs)
    inputs = np.zeros((B, L, width))
    targets = np.zeros((B, L, width))
    mask = np.zeros((B, L, width))
    series_indices = np.empty(B, dtype=np.intp)

    for b, (si, offset) in enumerate(pairs):
        z = _joint(series_list[si])
        if offset < 0 or offset + L > z.shape[0]:
            raise DataError(
                f"window [{offset}, {offset + L}) falls outside series "
                f"{series_list[si].series_id!r} of length {z.shape[0]}"
            )
        block = z[offset : offset + L]
        defined = np.isfinite(block)
        if not defined[:C].all() or (require_full_inputs and not defined.all()):
            raise DataError(
                f"window at offset {offset} of series "
                f"{series_list[si].series_id!r} covers undefined covariates"
            )
        inputs[b] = np.where(defined, block, 0.0)
        nxt = z[offset + 1 : offset + L]
        nxt_defined = np.isfinite(nxt)
        targets[b, : L - 1] = np.where(nxt_defined, nxt, 0.0)
        mask[b, : L - 1] = nxt_defined
        series_indices[b] = si

    return WindowBatch(
        inputs=inputs,
        targets=targets,
        scales=np.ones(B),
        loss_mask=mask,
        context_length=C,
        horizon=H,
        series_indices=series_indices,
        leads=leads,
    )


class TrainingPool:
    """Uniform sampler over every (series, offset) training window.

    A window starting at ``offset`` spans [offset, offset + C + H) and must
    end inside the training region, so series contribute
    T - 3H - C + 1 offsets each (when positive and T meets the policy's
    minimum length). Sampling is with replacement.
    """

    def __init__(self, series_list, C: int, H: int, policy: DatasetPolicy):
        self.series = list(series_list)
        self.C = int(C)
        self.H = int(H)
        self.skipped: list[str] = []
        counts = []
        for s in self.series:
            n = s.length - 3 * self.H - self.C + 1
            if n < 1 or s.length < policy.min_length:
                self.skipped.append(s.series_id)
                counts.append(0)
            else:
                counts.append(n)
        self._cumulative = np.concatenate([[0], np.cumsum(counts)])
        self.n_windows = int(self._cumulative[-1])
        if self.n_windows == 0:
            raise DataError(
                f"no training windows: every series is shorter than "
                f"C + 3H = {self.C + 3 * self.H}"
            )

    def sample(self, batch_size: int, rng) -> WindowBatch:
        flat = rng.integers(0, self.n_windows, size=batch_size)
        slots = np.searchsorted(self._cumulative, flat, side="right") - 1
        pairs = [
            (int(si), int(ix - self._cumulative[si]))
            for si, ix in zip(slots, flat)
        ]
        return _extract(self.series, pairs, self.C, self.H,
                        require_full_inputs=True)


def sample_training_batch(series_list, C: int, H: int, batch_size: int, rng,
                          policy: DatasetPolicy) -> WindowBatch:
    """One-shot convenience wrapper around TrainingPool."""
    return TrainingPool(series_list, C, H, policy).sample(batch_size, rng)


def evaluation_windows(series_list, C: int, H: int, split: str):
    """One window per eligible series, ending at the split's final index.

    Returns (WindowBatch, skipped series ids). The batch's horizon part on
    covariate channels may be masked (leads outrun the series end); the
    context part is always fully defined.
    """
    if split == "test":
        back = C + H
    elif split == "validation":
        back = C + 2 * H
    else:
        raise ValueError(f"split must be 'test' or 'validation', got {split!r}")
    pairs = []
    skipped = []
    for si, s in enumerate(series_list):
        offset = s.length - back
        if offset < 0:
            skipped.append(s.series_id)
        else:
            pairs.append((si, offset))
    if not pairs:
        raise DataError(f"no series long enough for a {split} window")
    batch = _extract(series_list, pairs, C, H, require_full_inputs=False)
    return batch, skipped


# ----------------------------------------------------------------------------
# Window scaling


def window_scales(batch: WindowBatch) -> np.ndarray:
    """Mean absolute context value of the target channel, floored at 1."""
    context_y = batch.inputs[:, : batch.context_length, 0]
    return np.maximum(np.abs(context_y).mean(axis=1), 1.0)


def scale_batch(batch: WindowBatch, append_log_scale: bool = False) -> WindowBatch:
    """Divide every z channel by the window's scale.

    ``append_log_scale`` adds a constant log(scale) input channel across all
    C + H steps, the extra feature of the step-per-timestep model.
    """
    if batch.scaled:
        raise ValueError("batch is already scaled")
    scales = window_scales(batch)
    inputs = batch.inputs / scales[:, None, None]
    targets = batch.targets / scales[:, None, None]
    if append_log_scale:
        channel = np.broadcast_to(
            np.log(scales)[:, None, None], (batch.batch_size, inputs.shape[1], 1)
        )
        inputs = np.concatenate([inputs, channel], axis=2)
    return replace(batch, inputs=inputs, targets=targets, scales=scales,
                   scaled=True)


def inverse_scale(preds: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Map model outputs back to original units (per-window multiply)."""
    preds = np.asarray(preds)
    if preds.shape[0] != scales.shape[0]:
        raise ValueError(
            f"{preds.shape[0]} prediction rows vs {scales.shape[0]} scales"
        )
    return preds * scales.reshape((-1,) + (1,) * (preds.ndim - 1))
