"""Stateful layer objects built on :mod:`pmu_sentinel.nn.functional`.

A layer owns its parameters (``params``), caches the forward context, and
fills ``grads`` during ``backward``. Shapes exclude the batch axis.
"""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import ParameterError, ShapeError
from . import functional as F


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._ctx = None
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = self.compute_output_shape(self.input_shape)
        return self.output_shape

    def compute_output_shape(self, input_shape):
        return tuple(input_shape)

    def config(self):
        return {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def __repr__(self):
        cfg = ", ".join(f"{k}={v!r}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, units, activation="linear"):
        super().__init__()
        if units < 1:
            raise ParameterError(f"dense units must be >= 1, got {units}")
        self.units = int(units)
        self.activation = activation

    def compute_output_shape(self, input_shape):
        return tuple(input_shape[:-1]) + (self.units,)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        fan_in = input_shape[-1]
        self.params = {
            "W": glorot_uniform(rng, (fan_in, self.units), fan_in, self.units),
            "b": np.zeros(self.units),
        }
        return out

    def config(self):
        return {"units": self.units, "activation": self.activation}

    def forward(self, x, training=False):
        y, self._ctx = F.dense_forward(x, self.params["W"], self.params["b"], self.activation)
        return y

    def backward(self, dy):
        g = F.dense_backward(self._ctx, dy)
        self.grads = g.params
        return g.input


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, filters, kernel_size, activation="linear"):
        super().__init__()
        if filters < 1 or kernel_size < 1:
            raise ParameterError("conv1d filters and kernel_size must be >= 1")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.activation = activation

    def compute_output_shape(self, input_shape):
        length, _ = input_shape
        if self.kernel_size > length:
            raise ShapeError(f"conv1d: kernel_size {self.kernel_size} larger than input length {length}")
        return (length - self.kernel_size + 1, self.filters)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        cin = input_shape[-1]
        k = self.kernel_size
        self.params = {
            "W": glorot_uniform(rng, (k, cin, self.filters), k * cin, k * self.filters),
            "b": np.zeros(self.filters),
        }
        return out

    def config(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size, "activation": self.activation}

    def forward(self, x, training=False):
        y, self._ctx = F.conv1d_forward(x, self.params["W"], self.params["b"], self.activation)
        return y

    def backward(self, dy):
        g = F.conv1d_backward(self._ctx, dy)
        self.grads = g.params
        return g.input


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, pool_size=2):
        super().__init__()
        if int(pool_size) != pool_size or pool_size < 1:
            raise ParameterError(f"pool_size must be an integer >= 1, got {pool_size!r}")
        self.pool_size = int(pool_size)

    def compute_output_shape(self, input_shape):
        length, ch = input_shape
        if length // self.pool_size < 1:
            raise ShapeError(f"maxpool: pool_size {self.pool_size} larger than input length {length}")
        return (length // self.pool_size, ch)

    def config(self):
        return {"pool_size": self.pool_size}

    def forward(self, x, training=False):
        y, self._ctx = F.maxpool1d_forward(x, self.pool_size)
        return y

    def backward(self, dy):
        return F.maxpool1d_backward(self._ctx, dy).input


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        self._ctx = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._ctx)


class Dropout(Layer):
    """Inverted dropout. ``rng`` is injected by the owning network.

    Setting ``fixed_mask`` replays the same mask on every training-mode call,
    which makes the layer deterministic for gradient checking.
    """

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)
        self.rng = None
        self.fixed_mask = None

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False):
        y, self._ctx = F.dropout_forward(x, self.rate, training, rng=self.rng, mask=self.fixed_mask)
        return y

    def backward(self, dy):
        return F.dropout_backward(self._ctx, dy).input


def _init_lstm(rng, input_dim, units, forget_bias=1.0):
    limit = math.sqrt(1.0 / units)
    params = {}
    for name, shape in F.lstm_param_shapes(input_dim, units).items():
        if name.startswith("W_x"):
            params[name] = glorot_uniform(rng, shape, input_dim, units)
        elif name.startswith("W_h"):
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.full(shape, forget_bias if name == "b_f" else 0.0)
    return params


class LSTM(Layer):
    """Unidirectional LSTM.

    With ``return_sequences=False`` only the last hidden state is emitted.
    """

    kind = "lstm"

    def __init__(self, units, return_sequences=False, reverse=False):
        super().__init__()
        if units < 1:
            raise ParameterError(f"lstm units must be >= 1, got {units}")
        self.units = int(units)
        self.return_sequences = bool(return_sequences)
        self.reverse = bool(reverse)

    def compute_output_shape(self, input_shape):
        steps, _ = input_shape
        return (steps, self.units) if self.return_sequences else (self.units,)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        self.params = _init_lstm(rng, input_shape[-1], self.units)
        return out

    def config(self):
        return {"units": self.units, "return_sequences": self.return_sequences, "reverse": self.reverse}

    def forward(self, x, training=False):
        hs, self._ctx = F.lstm_forward(x, self.params, reverse=self.reverse)
        if self.return_sequences:
            return hs
        # the state after consuming the whole sequence
        return hs[:, 0] if self.reverse else hs[:, -1]

    def backward(self, dy):
        if self.return_sequences:
            dhs = dy
        else:
            batch, steps = self._ctx["seq"].shape[:2]
            dhs = np.zeros((batch, steps, self.units))
            dhs[:, 0 if self.reverse else -1] = dy
        g = F.lstm_backward(self._ctx, dhs)
        self.grads = g.params
        return g.input


class BiLSTM(Layer):
    """Forward and reversed LSTMs with per-timestep concatenated outputs.

    ``units`` is per direction, so the output width is ``2 * units``.
    Parameters are stored with ``fwd.`` and ``bwd.`` prefixes.
    """

    kind = "bilstm"

    def __init__(self, units, return_sequences=False):
        super().__init__()
        if units < 1:
            raise ParameterError(f"bilstm units must be >= 1, got {units}")
        self.units = int(units)
        self.return_sequences = bool(return_sequences)

    def compute_output_shape(self, input_shape):
        steps, _ = input_shape
        w = 2 * self.units
        return (steps, w) if self.return_sequences else (w,)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        fwd = _init_lstm(rng, input_shape[-1], self.units)
        bwd = _init_lstm(rng, input_shape[-1], self.units)
        self.params = {**{f"fwd.{k}": v for k, v in fwd.items()}, **{f"bwd.{k}": v for k, v in bwd.items()}}
        return out

    def _split(self):
        fwd = {k[4:]: v for k, v in self.params.items() if k.startswith("fwd.")}
        bwd = {k[4:]: v for k, v in self.params.items() if k.startswith("bwd.")}
        return fwd, bwd

    def config(self):
        return {"units": self.units, "return_sequences": self.return_sequences}

    def forward(self, x, training=False):
        fwd, bwd = self._split()
        hs, self._ctx = F.bilstm_forward(x, fwd, bwd)
        if self.return_sequences:
            return hs
        u = self.units
        # forward direction ends at the last step, the reversed one at the first
        return np.concatenate([hs[:, -1, :u], hs[:, 0, u:]], axis=-1)

    def backward(self, dy):
        if self.return_sequences:
            dhs = dy
        else:
            batch, steps = self._ctx["fwd"]["seq"].shape[:2]
            u = self.units
            dhs = np.zeros((batch, steps, 2 * u))
            dhs[:, -1, :u] = dy[:, :u]
            dhs[:, 0, u:] = dy[:, u:]
        g = F.bilstm_backward(self._ctx, dhs)
        self.grads = {**{f"fwd.{k}": v for k, v in g.params["fwd"].items()},
                      **{f"bwd.{k}": v for k, v in g.params["bwd"].items()}}
        return g.input


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv1D, MaxPool1D, Flatten, Dropout, LSTM, BiLSTM)}


def layer_from_config(kind, config):
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ParameterError(f"unknown layer type {kind!r}") from None
    return cls(**config)
