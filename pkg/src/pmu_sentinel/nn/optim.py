"""Adam optimizer."""

import numpy as np


def init_adam_state():
    return {"t": 0, "m": {}, "v": {}}


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``params`` and ``grads`` are dicts of arrays with identical keys; ``state``
    comes from :func:`init_adam_state` and is updated in place as well.
    Returns ``params`` for convenience.
    """
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for key, p in params.items():
        g = grads[key]
        m = state["m"].get(key)
        if m is None:
            m = state["m"][key] = np.zeros_like(p)
            state["v"][key] = np.zeros_like(p)
        v = state["v"][key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = init_adam_state()

    def step(self, params, grads):
        return adam_step(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
