"""Forward and backward passes for every layer type, with hand-derived gradients.

Arrays are float64 numpy arrays. Sequence tensors are laid out as
``(batch, time, features)``; a leading batch axis may be omitted, in which
case one is added internally and removed from the result.

Each ``*_forward`` returns ``(output, ctx)`` where ``ctx`` holds what the
matching ``*_backward`` needs. Backward functions return a
:class:`LayerGrad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..exceptions import ParameterError, ShapeError

ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh")
LSTM_GATES = ("i", "f", "o", "c")


@dataclass
class LayerGrad:
    """Parameter gradients (same keys and shapes as the parameters) and the input gradient."""

    params: dict = field(default_factory=dict)
    input: np.ndarray | None = None


def sigmoid(z):
    # expit evaluates the logistic in an overflow-free branch form
    return expit(z)


def activate(z, activation):
    if activation in ("linear", None, "identity"):
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "tanh":
        return np.tanh(z)
    raise ParameterError(f"unknown activation {activation!r}")


def activation_grad(z, y, dy, activation):
    """Gradient w.r.t. the pre-activation ``z`` given output ``y`` and upstream ``dy``."""
    if activation in ("linear", None, "identity"):
        return dy
    if activation == "relu":
        return dy * (z > 0)
    if activation == "sigmoid":
        return dy * y * (1.0 - y)
    if activation == "tanh":
        return dy * (1.0 - y * y)
    raise ParameterError(f"unknown activation {activation!r}")


# --------------------------------------------------------------------------- dense


def dense_forward(x, W, b, activation="linear"):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: input {x.shape} incompatible with W {W.shape} and b {b.shape}")
    z = x @ W + b
    y = activate(z, activation)
    return y, {"x": x, "z": z, "y": y, "W": W, "activation": activation}


def dense_backward(ctx, dy):
    x, W = ctx["x"], ctx["W"]
    if dy.shape != ctx["y"].shape:
        raise ShapeError(f"dense: upstream grad {dy.shape} != output {ctx['y'].shape}")
    dz = activation_grad(ctx["z"], ctx["y"], dy, ctx["activation"])
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return LayerGrad({"W": x2.T @ dz2, "b": dz2.sum(axis=0)}, dz @ W.T)


# --------------------------------------------------------------------------- conv1d


def _batched(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (time, channels) or (batch, time, channels), got {x.shape}")
    return x, False


def conv1d_forward(x, W, b, activation="linear"):
    """Valid (unpadded) 1-D cross-correlation.

    ``W`` has shape (kernel_size, in_channels, filters); output length is
    ``len - kernel_size + 1``.
    """
    xb, squeeze = _batched(x)
    k, cin, cout = W.shape
    batch, length, ch = xb.shape
    if ch != cin:
        raise ShapeError(f"conv1d: input has {ch} channels, kernel expects {cin}")
    if k > length:
        raise ShapeError(f"conv1d: kernel_size {k} larger than input length {length}")
    if b.shape != (cout,):
        raise ShapeError(f"conv1d: bias shape {b.shape} != ({cout},)")
    lout = length - k + 1
    # (batch, lout, cin, k) -> (batch, lout, k, cin)
    cols = np.swapaxes(sliding_window_view(xb, k, axis=1), 2, 3)
    cols2 = cols.reshape(batch * lout, k * cin)
    z = (cols2 @ W.reshape(k * cin, cout)).reshape(batch, lout, cout) + b
    y = activate(z, activation)
    ctx = {"cols": cols2, "z": z, "y": y, "W": W, "activation": activation,
           "in_shape": xb.shape, "squeeze": squeeze}
    return (y[0] if squeeze else y), ctx


def conv1d_backward(ctx, dy):
    W = ctx["W"]
    k, cin, cout = W.shape
    batch, length, _ = ctx["in_shape"]
    dyb = dy[None] if ctx["squeeze"] else dy
    if dyb.shape != ctx["y"].shape:
        raise ShapeError(f"conv1d: upstream grad {dy.shape} != output {ctx['y'].shape}")
    dz = activation_grad(ctx["z"], ctx["y"], dyb, ctx["activation"])
    lout = dz.shape[1]
    dz2 = dz.reshape(batch * lout, cout)
    dW = (ctx["cols"].T @ dz2).reshape(k, cin, cout)
    db = dz2.sum(axis=0)
    dcols = (dz2 @ W.reshape(k * cin, cout).T).reshape(batch, lout, k, cin)
    dx = np.zeros((batch, length, cin))
    for j in range(k):
        dx[:, j : j + lout, :] += dcols[:, :, j, :]
    return LayerGrad({"W": dW, "b": db}, dx[0] if ctx["squeeze"] else dx)


# --------------------------------------------------------------------------- pooling


def maxpool1d_forward(x, pool_size):
    """Non-overlapping max pooling along time; a trailing remainder is dropped.

    Ties resolve to the earliest index in the window.
    """
    if isinstance(pool_size, bool) or int(pool_size) != pool_size or pool_size < 1:
        raise ParameterError(f"pool_size must be an integer >= 1, got {pool_size!r}")
    pool_size = int(pool_size)
    xb, squeeze = _batched(x)
    batch, length, ch = xb.shape
    lp = length // pool_size
    if lp < 1:
        raise ShapeError(f"maxpool: pool_size {pool_size} larger than input length {length}")
    windows = xb[:, : lp * pool_size].reshape(batch, lp, pool_size, ch)
    arg = windows.argmax(axis=2)
    y = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    ctx = {"arg": arg, "in_shape": xb.shape, "pool_size": pool_size, "squeeze": squeeze}
    return (y[0] if squeeze else y), ctx


def maxpool1d_backward(ctx, dy):
    batch, length, ch = ctx["in_shape"]
    p = ctx["pool_size"]
    dyb = dy[None] if ctx["squeeze"] else dy
    lp = dyb.shape[1]
    dwin = np.zeros((batch, lp, p, ch))
    np.put_along_axis(dwin, ctx["arg"][:, :, None, :], dyb[:, :, None, :], axis=2)
    dx = np.zeros((batch, length, ch))
    dx[:, : lp * p] = dwin.reshape(batch, lp * p, ch)
    return LayerGrad({}, dx[0] if ctx["squeeze"] else dx)


# --------------------------------------------------------------------------- dropout


def dropout_forward(x, rate, training, rng=None, mask=None):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``; identity at inference."""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, {"scale": None}
    if mask is None:
        if rng is None:
            raise ParameterError("training-mode dropout needs an rng or an explicit mask")
        mask = rng.random(x.shape) >= rate
    scale = mask / (1.0 - rate)
    return x * scale, {"scale": scale}


def dropout_backward(ctx, dy):
    if ctx["scale"] is None:
        return LayerGrad({}, dy)
    return LayerGrad({}, dy * ctx["scale"])


# --------------------------------------------------------------------------- LSTM


def lstm_param_shapes(input_dim, units):
    shapes = {}
    for g in LSTM_GATES:
        shapes[f"W_x{g}"] = (input_dim, units)
    for g in LSTM_GATES:
        shapes[f"W_h{g}"] = (units, units)
    for g in LSTM_GATES:
        shapes[f"b_{g}"] = (units,)
    return shapes


def _stack_gates(params):
    Wx = np.concatenate([params[f"W_x{g}"] for g in LSTM_GATES], axis=1)
    Wh = np.concatenate([params[f"W_h{g}"] for g in LSTM_GATES], axis=1)
    b = np.concatenate([params[f"b_{g}"] for g in LSTM_GATES])
    return Wx, Wh, b


def lstm_forward(x, params, reverse=False):
    """Run an LSTM over ``x`` of shape (batch, time, features) from zero state.

    Gates follow ``G_t = sigma(X_t W_xg + H_{t-1} W_hg + b_g)`` for the input,
    forget and output gates; the candidate is ``tanh`` of the same affine form
    with the ``c`` parameters, ``C_t = F_t * C_{t-1} + I_t * Cand_t`` and
    ``H_t = O_t * tanh(C_t)``. With ``reverse=True`` the sequence is consumed
    last-to-first and the hidden states are returned in original time order.

    Returns the hidden sequence of shape (batch, time, units).
    """
    xb, squeeze = _batched(x)
    if xb.shape[1] < 1:
        raise ShapeError("lstm: sequence must be non-empty")
    Wx, Wh, b = _stack_gates(params)
    units = Wh.shape[0]
    if Wx.shape[0] != xb.shape[2]:
        raise ShapeError(f"lstm: input has {xb.shape[2]} features, W_x expects {Wx.shape[0]}")
    if Wh.shape != (units, 4 * units) or b.shape != (4 * units,):
        raise ShapeError("lstm: inconsistent recurrent weight or bias shapes")
    seq = xb[:, ::-1] if reverse else xb
    batch, steps, _ = seq.shape
    xz = seq @ Wx + b  # (batch, steps, 4H)

    gates = np.empty((steps, batch, 4 * units))
    cells = np.empty((steps + 1, batch, units))
    hidden = np.empty((steps + 1, batch, units))
    tanh_c = np.empty((steps, batch, units))
    cells[0] = 0.0
    hidden[0] = 0.0
    H = units
    for t in range(steps):
        z = xz[:, t] + hidden[t] @ Wh
        g = gates[t]
        g[:, : 3 * H] = sigmoid(z[:, : 3 * H])
        g[:, 3 * H :] = np.tanh(z[:, 3 * H :])
        cells[t + 1] = g[:, H : 2 * H] * cells[t] + g[:, :H] * g[:, 3 * H :]
        tanh_c[t] = np.tanh(cells[t + 1])
        hidden[t + 1] = g[:, 2 * H : 3 * H] * tanh_c[t]

    hs = np.swapaxes(hidden[1:], 0, 1)
    if reverse:
        hs = hs[:, ::-1]
    hs = np.ascontiguousarray(hs)
    ctx = {"seq": seq, "Wx": Wx, "Wh": Wh, "gates": gates, "cells": cells,
           "hidden": hidden, "tanh_c": tanh_c, "reverse": reverse, "squeeze": squeeze}
    return (hs[0] if squeeze else hs), ctx


def lstm_backward(ctx, dhs):
    """Backpropagation through time. ``dhs`` matches the forward output shape."""
    dh_all = dhs[None] if ctx["squeeze"] else dhs
    if ctx["reverse"]:
        dh_all = dh_all[:, ::-1]
    seq, Wx, Wh = ctx["seq"], ctx["Wx"], ctx["Wh"]
    gates, cells, hidden, tanh_c = ctx["gates"], ctx["cells"], ctx["hidden"], ctx["tanh_c"]
    batch, steps, _ = seq.shape
    H = Wh.shape[0]
    if dh_all.shape != (batch, steps, H):
        raise ShapeError(f"lstm: upstream grad {dhs.shape} does not match hidden sequence")

    dZ = np.empty((batch, steps, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((batch, H))
    dc_next = np.zeros((batch, H))
    for t in range(steps - 1, -1, -1):
        g = gates[t]
        i, f, o, cand = g[:, :H], g[:, H : 2 * H], g[:, 2 * H : 3 * H], g[:, 3 * H :]
        dh = dh_all[:, t] + dh_next
        dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_next
        dz = dZ[:, t]
        dz[:, :H] = dc * cand * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * cells[t] * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh * tanh_c[t] * o * (1.0 - o)
        dz[:, 3 * H :] = dc * i * (1.0 - cand * cand)
        dWh += hidden[t].T @ dz
        dh_next = dz @ Wh.T
        dc_next = dc * f

    dZ2 = dZ.reshape(batch * steps, 4 * H)
    dWx = seq.reshape(batch * steps, -1).T @ dZ2
    db = dZ2.sum(axis=0)
    dx = dZ @ Wx.T
    if ctx["reverse"]:
        dx = dx[:, ::-1]
    dx = np.ascontiguousarray(dx)

    grads = {}
    for n, g in enumerate(LSTM_GATES):
        sl = slice(n * H, (n + 1) * H)
        grads[f"W_x{g}"] = dWx[:, sl]
        grads[f"W_h{g}"] = dWh[:, sl]
        grads[f"b_{g}"] = db[sl]
    return LayerGrad(grads, dx[0] if ctx["squeeze"] else dx)


def bilstm_forward(x, params_fwd, params_bwd):
    """Forward-direction and reversed LSTMs concatenated per timestep (2 * units features)."""
    hf, ctx_f = lstm_forward(x, params_fwd, reverse=False)
    hb, ctx_b = lstm_forward(x, params_bwd, reverse=True)
    units = hf.shape[-1]
    return np.concatenate([hf, hb], axis=-1), {"fwd": ctx_f, "bwd": ctx_b, "units": units}


def bilstm_backward(ctx, dy):
    u = ctx["units"]
    gf = lstm_backward(ctx["fwd"], dy[..., :u])
    gb = lstm_backward(ctx["bwd"], dy[..., u:])
    return LayerGrad({"fwd": gf.params, "bwd": gb.params}, gf.input + gb.input)


# --------------------------------------------------------------------------- loss


def mse(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError(f"mse: target {y.shape} and prediction {y_hat.shape} differ")
    if y.size == 0:
        raise ShapeError("mse: empty input")
    return float(np.mean((y - y_hat) ** 2))


def mse_grad(y, y_hat):
    """Gradient of :func:`mse` with respect to the prediction."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError(f"mse: target {y.shape} and prediction {y_hat.shape} differ")
    return 2.0 * (y_hat - y) / y.size
