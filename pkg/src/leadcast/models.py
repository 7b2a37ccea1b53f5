"""The two forecasting architectures and their inference loops.

Both models share a spine: a 2-layer LSTM (40 units, dropout between the
layers while training) into a fully connected layer with ReLU and a linear
output of width 1 + k (the target plus one channel per active covariate).
Every window starts from a zero hidden state.

base_lstm steps once per timestep and sees an extra constant input channel
carrying log(scale) for the window. seg_lstm instead reshapes the sequence
into segments of d consecutive timesteps (stride d while teacher forcing)
and predicts the value immediately after each segment; at inference it
slides the segment window forward one step per prediction, feeding its own
outputs back in. Predictions are one step ahead in both cases, and all
training happens in window-scaled space.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as tc
from .errors import ConfigurationError, ContractError, DimensionError
from .tensor import ParameterStore, Tensor
from .windows import WindowBatch, inverse_scale

KINDS = ("base_lstm", "seg_lstm")

CHECKPOINT_MAGIC = "leadcast-checkpoint-v1"


@dataclass
class ModelConfig:
    kind: str
    n_covariates: int = 0
    hidden: int = 40
    layers: int = 2
    dropout: float = 0.1
    segment_length: int = 1
    log_scale_feature: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        if self.log_scale_feature is None:
            self.log_scale_feature = self.kind == "base_lstm"
        if self.kind == "seg_lstm" and self.log_scale_feature:
            raise ConfigurationError("seg_lstm omits the log(scale) feature")
        if self.kind == "base_lstm" and self.segment_length != 1:
            raise ConfigurationError("segment_length only applies to seg_lstm")
        if self.hidden < 1 or self.layers < 1:
            raise ConfigurationError("hidden and layers must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.n_covariates < 0:
            raise ConfigurationError("n_covariates cannot be negative")
        if self.segment_length < 1:
            raise ConfigurationError("segment_length must be >= 1")

    @property
    def z_width(self) -> int:
        """Channels of the joint vector: target plus active covariates."""
        return 1 + self.n_covariates

    @property
    def input_width(self) -> int:
        """Feature count consumed by the first LSTM layer."""
        per_step = self.z_width + (1 if self.log_scale_feature else 0)
        return per_step * self.segment_length


def init_parameters(config: ModelConfig, rng) -> ParameterStore:
    """Fresh parameters: uniform +-1/sqrt(hidden), forget-gate bias +1."""
    h = config.hidden
    bound = 1.0 / np.sqrt(h)
    store = ParameterStore()

    def uniform(shape):
        return rng.uniform(-bound, bound, size=shape)

    width = config.input_width
    for layer in range(config.layers):
        in_l = width if layer == 0 else h
        store.add(f"lstm{layer}.w_ih", uniform((in_l, 4 * h)))
        store.add(f"lstm{layer}.w_hh", uniform((h, 4 * h)))
        b_ih = uniform(4 * h)
        b_ih[h : 2 * h] += 1.0
        store.add(f"lstm{layer}.b_ih", b_ih)
        store.add(f"lstm{layer}.b_hh", uniform(4 * h))
    store.add("head.w1", uniform((h, h)))
    store.add("head.b1", uniform(h))
    store.add("head.w2", uniform((h, config.z_width)))
    store.add("head.b2", uniform(config.z_width))
    return store


def lstm_forward(inputs, params: ParameterStore, config: ModelConfig,
                 training: bool = False, rng=None, initial_state=None):
    """The recorded LSTM stack: returns ([B, S, h] Tensor, per-layer states)."""
    x = inputs
    states = []
    for layer in range(config.layers):
        state = initial_state[layer] if initial_state is not None else None
        x, final = tc.lstm_layer(
            x,
            params[f"lstm{layer}.w_ih"],
            params[f"lstm{layer}.w_hh"],
            params[f"lstm{layer}.b_ih"],
            params[f"lstm{layer}.b_hh"],
            state=state,
        )
        states.append(final)
        if layer < config.layers - 1:
            x = tc.dropout(x, config.dropout, training, rng)
    return x, states


def head_forward(hs, params: ParameterStore, config: ModelConfig) -> Tensor:
    """FC + ReLU + linear output applied to every step of [B, S, h]."""
    batch, steps, h = hs.shape
    flat = tc.reshape(hs, (batch * steps, h))
    a1 = tc.relu(tc.add(tc.matmul(flat, params["head.w1"]), params["head.b1"]))
    out = tc.add(tc.matmul(a1, params["head.w2"]), params["head.b2"])
    return tc.reshape(out, (batch, steps, out.shape[1]))


def segment_reshape(window: np.ndarray, d: int) -> np.ndarray:
    """[B, S, F] -> [B, S/d, d*F], time order preserved within each segment."""
    if window.ndim != 3:
        raise DimensionError(f"segment_reshape expects [B, S, F], got {window.shape}")
    batch, steps, feats = window.shape
    if steps % d != 0:
        raise ConfigurationError(
            f"sequence length {steps} is not a multiple of segment length {d}"
        )
    return np.ascontiguousarray(window).reshape(batch, steps // d, d * feats)


def _check_scaled(batch: WindowBatch, config: ModelConfig):
    if not batch.scaled:
        raise ContractError("model forward requires a scaled batch")
    expected = config.z_width + (1 if config.log_scale_feature else 0)
    if batch.n_features != expected:
        raise ContractError(
            f"batch carries {batch.n_features} features, "
            f"{config.kind} with k={config.n_covariates} expects {expected}"
        )


def teacher_forced_predictions(batch: WindowBatch, params: ParameterStore,
                               config: ModelConfig, training: bool = False,
                               rng=None):
    """Scaled-space one-step-ahead predictions plus aligned targets and mask.

    base_lstm predicts at every window step; seg_lstm at every segment end
    (stride d over the C+H stream). Shapes: preds [B, S_pred, 1+k] with the
    target channel at index 0.
    """
    _check_scaled(batch, config)
    if config.kind == "base_lstm":
        hs, _ = lstm_forward(batch.inputs, params, config, training, rng)
        preds = head_forward(hs, params, config)
        targets, mask = batch.targets, batch.loss_mask
    else:
        d = config.segment_length
        segments = segment_reshape(batch.inputs, d)
        hs, _ = lstm_forward(segments, params, config, training, rng)
        preds = head_forward(hs, params, config)
        targets = batch.targets[:, d - 1 :: d]
        mask = batch.loss_mask[:, d - 1 :: d]
    if preds.shape[2] != config.z_width:
        raise ContractError(
            f"head produced {preds.shape[2]} channels, expected {config.z_width}"
        )
    return preds, targets, mask


def teacher_forced_loss(batch: WindowBatch, params: ParameterStore,
                        config: ModelConfig, training: bool = False,
                        rng=None) -> Tensor:
    """Masked smooth L1 over every supervised position, scaled space."""
    preds, targets, mask = teacher_forced_predictions(
        batch, params, config, training, rng
    )
    return tc.smooth_l1(preds, tc.tensor(targets), tc.tensor(mask))


def base_lstm_forward(batch: WindowBatch, params: ParameterStore,
                      config: ModelConfig) -> np.ndarray:
    """Teacher-forced predictions in original units (evaluation path)."""
    preds, _, _ = teacher_forced_predictions(batch, params, config)
    return inverse_scale(preds.data, batch.scales)


def seg_lstm_forward(batch: WindowBatch, params: ParameterStore,
                     config: ModelConfig) -> np.ndarray:
    """Per-segment predictions in original units (evaluation path)."""
    preds, _, _ = teacher_forced_predictions(batch, params, config)
    return inverse_scale(preds.data, batch.scales)


# ----------------------------------------------------------------------------
# Free-running inference


class _StackState:
    """Plain-array LSTM stack stepping for autoregressive inference."""

    def __init__(self, params: ParameterStore, config: ModelConfig, batch: int):
        self.config = config
        self.layers = []
        for layer in range(config.layers):
            self.layers.append((
                params[f"lstm{layer}.w_ih"].data,
                params[f"lstm{layer}.w_hh"].data,
                params[f"lstm{layer}.b_ih"].data + params[f"lstm{layer}.b_hh"].data,
                np.zeros((batch, config.hidden)),
                np.zeros((batch, config.hidden)),
            ))
        self._w1 = params["head.w1"].data
        self._b1 = params["head.b1"].data
        self._w2 = params["head.w2"].data
        self._b2 = params["head.b2"].data

    def step(self, x_t: np.ndarray) -> np.ndarray:
        out = x_t
        for idx, (w_ih, w_hh, bias, h, c) in enumerate(self.layers):
            h, c, _ = tc.lstm_step(out @ w_ih + bias, h, c, w_hh,
                                   self.config.hidden)
            self.layers[idx] = (w_ih, w_hh, bias, h, c)
            out = h
        return out

    def head(self, h_top: np.ndarray) -> np.ndarray:
        a1 = np.maximum(h_top @ self._w1 + self._b1, 0.0)
        return a1 @ self._w2 + self._b2


def free_run_forecast(params: ParameterStore, config: ModelConfig,
                      context: np.ndarray, scales: np.ndarray,
                      horizon: int) -> np.ndarray:
    """Autoregressive forecast of ``horizon`` joint vectors, scaled space.

    ``context`` is [B, C, 1+k] already scaled; ground truth past the context
    is never read. base_lstm feeds each prediction straight back in (with
    the window's constant log-scale channel). seg_lstm slides its C-length
    window one timestep per prediction (oldest value dropped, prediction
    appended) and re-runs the segment stack over the window, so every step
    is produced from the same stride-d state regime the model trains in;
    the newest input segment therefore mixes observed values with earlier
    predictions once the loop passes the context boundary.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    context = np.asarray(context, dtype=np.float64)
    if context.ndim != 3 or context.shape[2] != config.z_width:
        raise ContractError(
            f"context shape {context.shape} does not carry {config.z_width} z channels"
        )
    batch, C, _ = context.shape
    preds = np.empty((batch, horizon, config.z_width))

    if config.kind == "base_lstm":
        stack = _StackState(params, config, batch)
        feed = context
        log_scale = None
        if config.log_scale_feature:
            log_scale = np.log(np.asarray(scales, dtype=np.float64))[:, None]
            feed = np.concatenate(
                [context, np.broadcast_to(log_scale[:, None], (batch, C, 1))],
                axis=2,
            )
        for t in range(C):
            h_top = stack.step(feed[:, t])
        z_hat = stack.head(h_top)
        preds[:, 0] = z_hat
        for i in range(1, horizon):
            back = z_hat
            if log_scale is not None:
                back = np.concatenate([z_hat, log_scale], axis=1)
            h_top = stack.step(back)
            z_hat = stack.head(h_top)
            preds[:, i] = z_hat
    else:
        d = config.segment_length
        window = context
        for i in range(horizon):
            stack = _StackState(params, config, batch)
            segments = segment_reshape(window, d)
            for s in range(segments.shape[1]):
                h_top = stack.step(segments[:, s])
            z_hat = stack.head(h_top)
            preds[:, i] = z_hat
            window = np.concatenate([window[:, 1:], z_hat[:, None, :]], axis=1)
    return preds


def forecast_batch(batch: WindowBatch, params: ParameterStore,
                   config: ModelConfig) -> np.ndarray:
    """Free-run over a scaled evaluation batch; scaled-space [B, H, 1+k]."""
    if not batch.scaled:
        raise ContractError("forecast_batch requires a scaled batch")
    if batch.n_features != config.z_width:
        raise ContractError(
            f"forecast batch must carry only the {config.z_width} z channels, "
            f"got {batch.n_features} (scale it without the log-scale feature)"
        )
    context = batch.inputs[:, : batch.context_length, :]
    return free_run_forecast(params, config, context, batch.scales,
                             batch.horizon)


def forecast_series(params: ParameterStore, config: ModelConfig,
                    context: np.ndarray, horizon: int) -> np.ndarray:
    """Forecast one series from a raw [C, 1+k] context, original units."""
    context = np.asarray(context, dtype=np.float64)
    if context.ndim == 1:
        context = context[:, None]
    scale = max(np.abs(context[:, 0]).mean(), 1.0)
    preds = free_run_forecast(
        params, config, context[None] / scale, np.array([scale]), horizon
    )
    return preds[0] * scale


# ----------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params: ParameterStore, config: ModelConfig,
                    extra: dict | None = None) -> None:
    """One JSON header line, then the raw little-endian float64 values."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "config": asdict(config),
        "extra": extra or {},
        "parameters": [
            {"name": name, "shape": list(t.shape)} for name, t in params.items()
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, config, extra); values are bit-exact."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContractError(f"{path} is not a checkpoint: {exc}") from None
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ContractError(f"{path} has unknown checkpoint format")
    config = ModelConfig(**header["config"])
    store = ParameterStore()
    offset = 0
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        block = payload[offset * 8 : (offset + count) * 8]
        if len(block) != count * 8:
            raise ContractError(f"{path} is truncated at {entry['name']}")
        values = np.frombuffer(block, dtype="<f8").reshape(shape).copy()
        store.add(entry["name"], values)
        offset += count
    if offset * 8 != len(payload):
        raise ContractError(f"{path} carries {len(payload) - offset * 8} stray bytes")
    return store, config, header.get("extra", {})


__all__ = [
    "ModelConfig",
    "init_parameters",
    "lstm_forward",
    "head_forward",
    "segment_reshape",
    "teacher_forced_predictions",
    "teacher_forced_loss",
    "base_lstm_forward",
    "seg_lstm_forward",
    "free_run_forecast",
    "forecast_batch",
    "forecast_series",
    "save_checkpoint",
    "load_checkpoint",
]
