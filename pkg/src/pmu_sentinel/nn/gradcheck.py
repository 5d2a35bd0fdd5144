"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .functional import mse, mse_grad

# below this magnitude both gradients are treated as zero
_DENOM_FLOOR = 1e-7


def relative_error(analytic, numeric, floor=_DENOM_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, arr, eps=1e-5):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = f()
        flat[i] = orig - eps
        minus = f()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * eps)
    return grad


def gradient_check(network, x, y=None, eps=1e-5, training=False, include_input=False, corrupt=None):
    """Largest relative error between backprop and finite-difference gradients of the MSE loss.

    Every parameter of ``network`` is perturbed. ``corrupt`` is an optional
    callable applied to the analytic gradient dict before comparison (used to
    confirm the check detects broken gradients). With ``include_input`` the
    input gradient is checked as well.
    """
    x = np.array(x, dtype=np.float64)
    out = network.forward(x, training=training)
    if y is None:
        y = np.random.default_rng(0).normal(size=out.shape)
    y = np.asarray(y, dtype=np.float64)
    dx = network.backward(mse_grad(y, out))
    analytic = {k: g.copy() for k, g in network.named_gradients()}
    if corrupt is not None:
        corrupt(analytic)

    def loss():
        return mse(y, network.forward(x, training=training))

    worst = 0.0
    for key, param in network.named_parameters():
        num = numeric_gradient(loss, param, eps)
        if num.size:
            worst = max(worst, float(relative_error(analytic[key], num).max()))
    if include_input:
        num = numeric_gradient(loss, x, eps)
        worst = max(worst, float(relative_error(dx, num).max()))
    return worst
