"""Teacher-forced optimization with free-running validation.

One fit call owns its parameter store, optimizer state, and RNG streams
exclusively; callers may run many fits in parallel on read-only data. The
training loss is masked SmoothL1 over every supervised position of every
output channel; model selection uses the same loss computed free-running
over the validation windows, in scaled space, with dropout disabled.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError
from .models import ModelConfig, forecast_batch, teacher_forced_loss
from .tensor import ParameterStore, Tape, seeded_rng
from .tsf import DatasetPolicy
from .windows import TrainingPool, evaluation_windows, scale_batch

BATCHES_PER_EPOCH = {"base_lstm": 200, "seg_lstm": 500}


@dataclass
class TrainConfig:
    """Optimization recipe; defaults are the published training setup."""

    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 128
    batches_per_epoch: int | None = None
    weight_decay: float = 1e-8
    dropout: float = 0.1
    patience: int = 30
    seed: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigurationError("epochs, batch_size and patience must be >= 1")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ConfigurationError("batches_per_epoch must be >= 1 when given")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")

    def resolved_batches_per_epoch(self, kind: str) -> int:
        """Explicit setting, else the per-architecture default."""
        if self.batches_per_epoch is not None:
            return self.batches_per_epoch
        if kind not in BATCHES_PER_EPOCH:
            raise ConfigurationError(f"unknown model kind {kind!r}")
        return BATCHES_PER_EPOCH[kind]


# ----------------------------------------------------------------------------
# AdamW

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus the shared step counter."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: ParameterStore, state: OptimizerState, lr: float,
               weight_decay: float) -> None:
    """One decoupled-decay Adam update from the gradients held in ``params``.

    Weight decay multiplies each parameter by (1 - lr * wd) before the
    adaptive step, so decay never enters the moment estimates. A parameter
    with no gradient this step still decays; non-finite gradients abort
    with the parameter's name.
    """
    state.step += 1
    correction1 = 1.0 - BETA1 ** state.step
    correction2 = 1.0 - BETA2 ** state.step
    for name, tensor in params.items():
        grad = tensor.grad
        if grad is not None and not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if weight_decay:
            tensor.data *= 1.0 - lr * weight_decay
        if grad is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        m, v = state.m[name], state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * grad
        v *= BETA2
        v += (1.0 - BETA2) * grad * grad
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)


# ----------------------------------------------------------------------------
# OneCycle schedule


@dataclass(frozen=True)
class SchedulerState:
    """Cosine warmup to max_lr over the first warmup fraction, cosine decay after."""

    max_lr: float
    total_steps: int
    warmup_fraction: float = 0.3
    initial_divisor: float = 25.0
    final_divisor: float = 1e4

    def __post_init__(self):
        if self.max_lr <= 0 or self.total_steps < 1:
            raise ConfigurationError("scheduler needs max_lr > 0 and total_steps >= 1")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigurationError(f"warmup_fraction must lie in (0, 1), got {self.warmup_fraction}")
        if self.initial_divisor <= 1.0 or self.final_divisor <= 1.0:
            raise ConfigurationError("divisors must exceed 1")


def _cosine(start: float, end: float, progress: float) -> float:
    return end + (start - end) * (1.0 + math.cos(math.pi * progress)) / 2.0


def onecycle_lr(step: float, sched: SchedulerState) -> float:
    """Learning rate at ``step`` in [0, total_steps]."""
    if not 0 <= step <= sched.total_steps:
        raise ValueError(f"step {step} outside [0, {sched.total_steps}]")
    peak = sched.warmup_fraction * sched.total_steps
    if step <= peak:
        return _cosine(sched.max_lr / sched.initial_divisor, sched.max_lr,
                       step / peak)
    return _cosine(sched.max_lr, sched.max_lr / sched.final_divisor,
                   (step - peak) / (sched.total_steps - peak))


# ----------------------------------------------------------------------------
# Fit


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class FitReport:
    """Per-epoch history plus how and why the run ended."""

    epochs: list
    best_epoch: int
    best_val_loss: float
    stopped_early: bool = False
    failed: bool = False
    failure: str = ""
    wall_seconds: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
            for rec in self.epochs:
                writer.writerow([rec.epoch, repr(rec.train_loss),
                                 repr(rec.val_loss), repr(rec.lr),
                                 repr(rec.seconds)])


def validate(params: ParameterStore, config: ModelConfig, series_list,
             context_length: int, horizon: int) -> float:
    """Free-running SmoothL1 over the validation windows, scaled space.

    One window per eligible series; the model sees only the context and its
    own predictions, and the loss covers all output channels over the H
    forecast steps, masked where covariate truth is undefined.
    """
    batch, _ = evaluation_windows(series_list, context_length, horizon,
                                  "validation")
    scaled = scale_batch(batch)
    preds = forecast_batch(scaled, params, config)
    actual = scaled.inputs[:, context_length:, :]
    mask = scaled.loss_mask[:, context_length - 1 : context_length + horizon - 1, :]
    residual = preds - actual
    abs_r = np.abs(residual)
    elem = np.where(abs_r < 1.0, 0.5 * residual * residual, abs_r - 0.5)
    return float((elem * mask).sum() / mask.sum())


def fit(params: ParameterStore, model_config: ModelConfig, series_list,
        context_length: int, horizon: int, config: TrainConfig,
        policy: DatasetPolicy | None = None):
    """Train ``params`` in place; returns (params at best epoch, FitReport).

    Each epoch draws batches_per_epoch teacher-forced batches with
    replacement, then scores the free-running validation loss. The best
    validation snapshot is restored at the end, whether the loop runs out
    of epochs, stalls past the patience, or aborts on a numeric failure.
    """
    t_start = time.perf_counter()
    policy = policy or DatasetPolicy(min_length=context_length + 3 * horizon)
    pool = TrainingPool(series_list, context_length, horizon, policy)
    rng_batches = seeded_rng(config.seed, "batches")
    rng_dropout = seeded_rng(config.seed, "dropout")
    batches_per_epoch = config.resolved_batches_per_epoch(model_config.kind)
    sched = SchedulerState(max_lr=config.learning_rate,
                           total_steps=config.epochs * batches_per_epoch)

    optimizer = OptimizerState()
    best_snapshot = params.snapshot()
    best_epoch = 0
    best_val = math.inf
    stalls = 0
    records: list[EpochRecord] = []
    stopped_early = False
    failed = False
    failure = ""
    step = 0
    lr = onecycle_lr(0, sched)

    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        losses = []
        try:
            for _ in range(batches_per_epoch):
                lr = onecycle_lr(step, sched)
                batch = pool.sample(config.batch_size, rng_batches)
                scaled = scale_batch(
                    batch, append_log_scale=model_config.log_scale_feature)
                params.zero_grads()
                with Tape() as tape:
                    loss = teacher_forced_loss(scaled, params, model_config,
                                               training=True, rng=rng_dropout)
                tape.backward(loss, params=params)
                adamw_step(params, optimizer, lr, config.weight_decay)
                losses.append(loss.item())
                step += 1
            val_loss = validate(params, model_config, series_list,
                                context_length, horizon)
        except NumericError as exc:
            failed = True
            failure = str(exc)
            records.append(EpochRecord(
                epoch, float(np.mean(losses)) if losses else math.nan,
                math.nan, lr, time.perf_counter() - epoch_start))
            break

        records.append(EpochRecord(epoch, float(np.mean(losses)), val_loss,
                                   lr, time.perf_counter() - epoch_start))
        if not math.isfinite(val_loss):
            failed = True
            failure = f"validation loss became non-finite at epoch {epoch}"
            break
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_snapshot = params.snapshot()
            stalls = 0
        else:
            stalls += 1
            if stalls >= config.patience:
                stopped_early = True
                break

    params.load_snapshot(best_snapshot)
    report = FitReport(
        epochs=records,
        best_epoch=best_epoch,
        best_val_loss=best_val if best_epoch else math.nan,
        stopped_early=stopped_early,
        failed=failed,
        failure=failure,
        wall_seconds=time.perf_counter() - t_start,
    )
    return params, report
