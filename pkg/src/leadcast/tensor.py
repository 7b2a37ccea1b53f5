"""Dense float64 tensors with tape-based reverse-mode differentiation.

Just enough array machinery to train small recurrent networks: elementwise
arithmetic with leading-axis broadcasting, 2-D matmul, concat/slice/reshape,
the usual activations, inverted dropout, a masked Smooth-L1 loss, and a fused
LSTM layer primitive whose hand-derived backward pass is validated against
central finite differences (see ``gradient_check``).

Recording model: ops executed while a ``Tape`` is active append one record per
primitive. ``Tape.backward`` replays the records exactly once, in reverse
order, accumulating adjoints into ``Tensor.grad`` on every tensor that
requires gradients. With no active tape the same ops run as plain math, which
is the inference path.

All randomness flows through explicitly passed ``numpy.random.Generator``
objects; ``seeded_rng`` builds named PCG64 streams so every stochastic
component of an experiment is reproducible from one integer seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError


def seeded_rng(seed: int, stream: str = "") -> np.random.Generator:
    """A PCG64 generator for a named stream derived from one seed.

    Distinct stream names yield statistically independent generators while
    staying bit-reproducible across processes: the state is
    ``PCG64(SeedSequence([seed, crc32(stream)]))``.
    """
    entropy = [int(seed), zlib.crc32(stream.encode("utf-8"))]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A float64 ndarray plus gradient bookkeeping.

    ``requires_grad`` marks leaves (parameters) and anything computed from
    them under an active tape. After ``Tape.backward`` the accumulated
    adjoint of each such tensor is in ``grad``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad)


def contains_nonfinite(t) -> bool:
    """Validity check: True if any NaN or Inf is present."""
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    return not bool(np.isfinite(data).all())


def assert_finite(t, what: str) -> None:
    if contains_nonfinite(t):
        raise NumericError(f"non-finite values in {what}")


# ----------------------------------------------------------------------------
# Tape


class Tape:
    """Ordered record of primitive operations for adjoint replay.

    Usable as a context manager; ops executed inside record themselves when
    any differentiable input is involved. One tape is confined to one worker.
    """

    def __init__(self):
        self._records = []  # (output Tensor, inputs tuple, vjp callable)
        self._grad_inputs: dict[int, Tensor] = {}

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._records)

    def _record(self, out: Tensor, inputs, vjp) -> None:
        self._records.append((out, inputs, vjp))
        for inp in inputs:
            if isinstance(inp, Tensor) and inp.requires_grad:
                self._grad_inputs.setdefault(id(inp), inp)

    def backward(self, loss: Tensor, params: "ParameterStore | None" = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``grad`` for every leaf tensor.

        Each record is visited exactly once, in reverse recording order; a
        record producing an output no adjoint reached is skipped (it does not
        feed the loss). When ``params`` is given, the resulting parameter
        gradients are checked for finiteness and a NumericError naming the
        offending parameter is raised otherwise.
        """
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._records):
            g = adjoints.pop(id(out), None)
            if g is None:
                continue
            for inp, contrib in zip(inputs, vjp(g)):
                if contrib is None or not isinstance(inp, Tensor):
                    continue
                key = id(inp)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + contrib
                else:
                    adjoints[key] = contrib
        # adjoints never consumed as a record output belong to leaves
        for key, g in adjoints.items():
            leaf = self._grad_inputs.get(key)
            if leaf is not None:
                leaf.grad = g if leaf.grad is None else leaf.grad + g
        if params is not None:
            params.check_finite_grads()


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _wants_grad(*tensors) -> bool:
    return _active_tape() is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in tensors
    )


def _register(out: Tensor, inputs, vjp) -> Tensor:
    out.requires_grad = True
    _active_tape()._record(out, inputs, vjp)
    return out


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else _as_array(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ----------------------------------------------------------------------------
# Primitive operations


def add(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad + bd)
    if _wants_grad(a, b):
        def vjp(g):
            return (
                _unbroadcast(g, ad.shape) if isinstance(a, Tensor) else None,
                _unbroadcast(g, bd.shape) if isinstance(b, Tensor) else None,
            )
        return _register(out, (a, b), vjp)
    return out


def sub(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad - bd)
    if _wants_grad(a, b):
        def vjp(g):
            return (
                _unbroadcast(g, ad.shape) if isinstance(a, Tensor) else None,
                _unbroadcast(-g, bd.shape) if isinstance(b, Tensor) else None,
            )
        return _register(out, (a, b), vjp)
    return out


def mul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad * bd)
    if _wants_grad(a, b):
        def vjp(g):
            return (
                _unbroadcast(g * bd, ad.shape) if isinstance(a, Tensor) else None,
                _unbroadcast(g * ad, bd.shape) if isinstance(b, Tensor) else None,
            )
        return _register(out, (a, b), vjp)
    return out


def matmul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise DimensionError(f"matmul shapes do not conform: {ad.shape} @ {bd.shape}")
    out = Tensor(ad @ bd)
    if _wants_grad(a, b):
        def vjp(g):
            return (
                g @ bd.T if isinstance(a, Tensor) else None,
                ad.T @ g if isinstance(b, Tensor) else None,
            )
        return _register(out, (a, b), vjp)
    return out


def concat(tensors, axis: int) -> Tensor:
    datas = [_data(t) for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis))
    if _wants_grad(*tensors):
        sizes = [d.shape[axis] for d in datas]
        splits = np.cumsum(sizes)[:-1]
        def vjp(g):
            pieces = np.split(g, splits, axis=axis)
            return tuple(
                p if isinstance(t, Tensor) else None for t, p in zip(tensors, pieces)
            )
        return _register(out, tuple(tensors), vjp)
    return out


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    xd = _data(x)
    index = [slice(None)] * xd.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor(xd[index])
    if _wants_grad(x):
        def vjp(g):
            full = np.zeros_like(xd)
            full[index] = g
            return (full,)
        return _register(out, (x,), vjp)
    return out


def reshape(x, shape) -> Tensor:
    xd = _data(x)
    out = Tensor(xd.reshape(shape))
    if _wants_grad(x):
        def vjp(g):
            return (g.reshape(xd.shape),)
        return _register(out, (x,), vjp)
    return out


def sigmoid(x) -> Tensor:
    xd = _data(x)
    y = _sigmoid_raw(xd)
    out = Tensor(y)
    if _wants_grad(x):
        def vjp(g):
            return (g * y * (1.0 - y),)
        return _register(out, (x,), vjp)
    return out


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # numerically stable on both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> Tensor:
    xd = _data(x)
    y = np.tanh(xd)
    out = Tensor(y)
    if _wants_grad(x):
        def vjp(g):
            return (g * (1.0 - y * y),)
        return _register(out, (x,), vjp)
    return out


def relu(x) -> Tensor:
    xd = _data(x)
    out = Tensor(np.maximum(xd, 0.0))
    if _wants_grad(x):
        def vjp(g):
            return (g * (xd > 0.0),)
        return _register(out, (x,), vjp)
    return out


def dropout(x, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Eval mode is the identity, bit for bit (the input tensor is returned).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x if isinstance(x, Tensor) else Tensor(x)
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    xd = _data(x)
    keep = (rng.random(xd.shape) >= p) / (1.0 - p)
    out = Tensor(xd * keep)
    if _wants_grad(x):
        def vjp(g):
            return (g * keep,)
        return _register(out, (x,), vjp)
    return out


def smooth_l1(pred, target, mask=None) -> Tensor:
    """Mean piecewise loss: 0.5 r^2 where |r| < 1, |r| - 0.5 elsewhere.

    ``mask`` (same shape, 0/1) selects contributing elements; the mean runs
    over selected elements only. Gradients flow to ``pred`` alone.
    """
    pd, td = _data(pred), _data(target)
    if pd.shape != td.shape:
        raise DimensionError(f"smooth_l1 shapes differ: {pd.shape} vs {td.shape}")
    r = pd - td
    abs_r = np.abs(r)
    elem = np.where(abs_r < 1.0, 0.5 * r * r, abs_r - 0.5)
    if mask is not None:
        md = _data(mask)
        if md.shape != pd.shape:
            raise DimensionError(f"smooth_l1 mask shape {md.shape} != {pd.shape}")
        count = md.sum()
        if count == 0:
            raise ValueError("smooth_l1: empty mask, mean undefined")
        out = Tensor((elem * md).sum() / count)
    else:
        md = None
        count = pd.size
        out = Tensor(elem.mean())
    if _wants_grad(pred):
        def vjp(g):
            dpred = np.clip(r, -1.0, 1.0) / count
            if md is not None:
                dpred = dpred * md
            return (g * dpred, None, None)
        return _register(out, (pred, target, mask), vjp)
    return out


# ----------------------------------------------------------------------------
# Fused LSTM layer

# Gate block layout along the 4h axis, in order: input, forget, cell, output.


def lstm_step(xproj_t, h_prev, c_prev, w_hh, hidden):
    """One plain-array LSTM cell step from a precomputed input projection.

    ``xproj_t`` is x_t @ W_ih + b_ih + b_hh, shape [B, 4h]. Returns
    (h, c, gates) where gates is the [B, 4h] post-activation block, laid out
    (input, forget, cell, output). Shared by the recorded sequence forward
    and the free-running inference loops.
    """
    pre = xproj_t + h_prev @ w_hh
    gates = np.empty_like(pre)
    gates[:, : 2 * hidden] = _sigmoid_raw(pre[:, : 2 * hidden])          # i, f
    gates[:, 2 * hidden : 3 * hidden] = np.tanh(pre[:, 2 * hidden : 3 * hidden])  # g
    gates[:, 3 * hidden :] = _sigmoid_raw(pre[:, 3 * hidden :])          # o
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    g = gates[:, 2 * hidden : 3 * hidden]
    o = gates[:, 3 * hidden :]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, gates


def lstm_layer(x, w_ih, w_hh, b_ih, b_hh, state=None):
    """Run one LSTM layer over a [B, S, F] sequence; returns ([B, S, h], (hT, cT)).

    Weight shapes: w_ih [F, 4h], w_hh [h, 4h], biases [4h], gate blocks in
    (input, forget, cell, output) order. ``state`` is an optional plain-array
    (h0, c0) pair; it defaults to zeros and is not differentiated. The whole
    sequence is recorded as a single primitive whose backward pass is
    backpropagation through time.
    """
    xd = _data(x)
    wih, whh = _data(w_ih), _data(w_hh)
    bih, bhh = _data(b_ih), _data(b_hh)
    if xd.ndim != 3:
        raise DimensionError(f"lstm_layer expects [B, S, F] input, got {xd.shape}")
    batch, steps, feats = xd.shape
    hidden = whh.shape[0]
    if wih.shape != (feats, 4 * hidden):
        raise DimensionError(
            f"lstm_layer w_ih shape {wih.shape} does not match input {xd.shape}"
        )
    if whh.shape != (hidden, 4 * hidden):
        raise DimensionError(f"lstm_layer w_hh shape {whh.shape} is not [h, 4h]")

    if state is None:
        h = np.zeros((batch, hidden))
        c = np.zeros((batch, hidden))
    else:
        h, c = np.array(state[0], dtype=np.float64), np.array(state[1], dtype=np.float64)

    # project all timesteps through the input weights in one pass
    xproj = xd.reshape(batch * steps, feats) @ wih + (bih + bhh)
    xproj = xproj.reshape(batch, steps, 4 * hidden)

    gates_seq = np.empty((steps, batch, 4 * hidden))
    c_seq = np.empty((steps, batch, hidden))
    h_prev_seq = np.empty((steps, batch, hidden))
    c_prev_seq = np.empty((steps, batch, hidden))
    hs = np.empty((batch, steps, hidden))
    for t in range(steps):
        h_prev_seq[t] = h
        c_prev_seq[t] = c
        h, c, gates = lstm_step(xproj[:, t, :], h, c, whh, hidden)
        gates_seq[t] = gates
        c_seq[t] = c
        hs[:, t, :] = h

    out = Tensor(hs)
    final_state = (h.copy(), c.copy())
    if _wants_grad(x, w_ih, w_hh, b_ih, b_hh):
        def vjp(g):
            dh_next = np.zeros((batch, hidden))
            dc_next = np.zeros((batch, hidden))
            dpre_seq = np.empty((steps, batch, 4 * hidden))
            for t in range(steps - 1, -1, -1):
                gates = gates_seq[t]
                i = gates[:, :hidden]
                f = gates[:, hidden : 2 * hidden]
                gg = gates[:, 2 * hidden : 3 * hidden]
                o = gates[:, 3 * hidden :]
                tanh_c = np.tanh(c_seq[t])
                dh = g[:, t, :] + dh_next
                dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
                dpre = dpre_seq[t]
                dpre[:, :hidden] = dc * gg * i * (1.0 - i)                       # input gate
                dpre[:, hidden : 2 * hidden] = dc * c_prev_seq[t] * f * (1.0 - f)  # forget gate
                dpre[:, 2 * hidden : 3 * hidden] = dc * i * (1.0 - gg * gg)      # cell candidate
                dpre[:, 3 * hidden :] = dh * tanh_c * o * (1.0 - o)              # output gate
                dh_next = dpre @ whh.T
                dc_next = dc * f
            dpre_flat = dpre_seq.transpose(1, 0, 2).reshape(batch * steps, 4 * hidden)
            dx = None
            if isinstance(x, Tensor):
                dx = (dpre_flat @ wih.T).reshape(batch, steps, feats)
            dwih = xd.reshape(batch * steps, feats).T @ dpre_flat
            hp_flat = h_prev_seq.transpose(1, 0, 2).reshape(batch * steps, hidden)
            dwhh = hp_flat.T @ dpre_flat
            db = dpre_flat.sum(axis=0)
            return (
                dx,
                dwih if isinstance(w_ih, Tensor) else None,
                dwhh if isinstance(w_hh, Tensor) else None,
                db if isinstance(b_ih, Tensor) else None,
                db.copy() if isinstance(b_hh, Tensor) else None,
            )
        _register(out, (x, w_ih, w_hh, b_ih, b_hh), vjp)
    return out, final_state


# ----------------------------------------------------------------------------
# Parameter store


class ParameterStore:
    """Named parameter tensors with a stable flat index over all scalars.

    Flat order is insertion order; checkpoints preserve it by storing names
    in sequence, so the index is also stable across save/load.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._offsets: np.ndarray | None = None

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(values, requires_grad=True)
        self._params[name] = t
        self._offsets = None
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    @property
    def n_scalars(self) -> int:
        return sum(t.size for t in self._params.values())

    def _offset_table(self) -> np.ndarray:
        if self._offsets is None:
            sizes = [t.size for t in self._params.values()]
            self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        return self._offsets

    def _locate(self, flat_index: int):
        offsets = self._offset_table()
        if not 0 <= flat_index < offsets[-1]:
            raise IndexError(f"flat index {flat_index} out of range")
        slot = int(np.searchsorted(offsets, flat_index, side="right")) - 1
        name = list(self._params)[slot]
        return name, flat_index - int(offsets[slot])

    def describe_flat(self, flat_index: int) -> str:
        name, local = self._locate(flat_index)
        return f"{name}[{local}]"

    def flat_get(self, flat_index: int) -> float:
        name, local = self._locate(flat_index)
        return float(self._params[name].data.flat[local])

    def flat_set(self, flat_index: int, value: float) -> None:
        name, local = self._locate(flat_index)
        self._params[name].data.flat[local] = value

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def flat_gradients(self) -> np.ndarray:
        parts = []
        for name, t in self._params.items():
            if t.grad is None:
                parts.append(np.zeros(t.size))
            else:
                parts.append(np.asarray(t.grad).ravel())
        return np.concatenate(parts)

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def check_finite_grads(self) -> None:
        for name, t in self._params.items():
            if t.grad is not None and not np.isfinite(t.grad).all():
                raise NumericError(f"non-finite gradient for parameter {name}")

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            src = np.asarray(values[name], dtype=np.float64)
            if src.shape != t.data.shape:
                raise DimensionError(
                    f"snapshot shape {src.shape} != {t.data.shape} for {name}"
                )
            t.data = src.copy()


# ----------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradientCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_error: float
    worst_parameter: str
    n_checked: int
    tol: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def gradient_check(
    f,
    store: ParameterStore,
    h: float = 1e-5,
    tol: float = 1e-4,
    n_sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradientCheckReport:
    """Compare tape gradients of ``f()`` with (f(θ+h) - f(θ-h)) / 2h.

    ``f`` must be a deterministic zero-argument callable returning a scalar
    Tensor from the current store contents (dropout disabled). Checks every
    parameter, or ``n_sample`` random flat indices when given. Relative error
    uses denominator max(|a| + |n|, 1e-6) so near-zero gradients compare in
    absolute terms instead of amplifying finite-difference noise.
    """
    store.zero_grads()
    with Tape() as tape:
        loss = f()
    tape.backward(loss, params=store)
    analytic = store.flat_gradients()

    total = store.n_scalars
    if n_sample is None or n_sample >= total:
        indices = np.arange(total)
    else:
        if rng is None:
            raise ValueError("gradient_check with sampling needs an rng")
        indices = rng.choice(total, size=n_sample, replace=False)

    max_rel = 0.0
    worst = ""
    failures = []
    for idx in indices:
        idx = int(idx)
        orig = store.flat_get(idx)
        store.flat_set(idx, orig + h)
        f_plus = f().item()
        store.flat_set(idx, orig - h)
        f_minus = f().item()
        store.flat_set(idx, orig)
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[idx]
        rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
        if rel > max_rel:
            max_rel = rel
            worst = store.describe_flat(idx)
        if rel >= tol:
            failures.append((store.describe_flat(idx), a, numeric, rel))
    store.zero_grads()
    return GradientCheckReport(
        max_rel_error=max_rel,
        worst_parameter=worst,
        n_checked=len(indices),
        tol=tol,
        failures=failures,
    )
