"""Sequential network container and its JSON serialization."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import __version__
from ..exceptions import SchemaError, ShapeError, TrainingError
from .layers import Dropout, layer_from_config

ENGINE_TAG = f"pmu_sentinel-nn/{__version__}"


class Network:
    """A stack of layers applied in order to inputs of shape (batch, *input_shape)."""

    def __init__(self, layers, input_shape, seed=0, name=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.name = name
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, self.rng)
            if isinstance(layer, Dropout):
                layer.rng = self.rng
        self.output_shape = shape

    def reseed(self, seed):
        """Reset the dropout stream without touching the parameters."""
        self.rng = np.random.default_rng(seed)
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = self.rng

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"network expects inputs of shape (batch, {self.input_shape}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def predict(self, x, batch_size=1024):
        x = np.asarray(x, dtype=np.float64)
        outs = [self.forward(x[i : i + batch_size], training=False) for i in range(0, x.shape[0], batch_size)]
        if not outs:
            return np.zeros((0,) + tuple(self.output_shape))
        return np.concatenate(outs, axis=0)

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_parameters(self):
        """``(key, array)`` pairs in a stable order; keys look like ``"3.W_xi"``."""
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{idx}.{name}", layer.params[name]

    def named_gradients(self):
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{idx}.{name}", layer.grads[name]

    def parameters(self):
        return dict(self.named_parameters())

    def gradients(self):
        return dict(self.named_gradients())

    def parameter_count(self):
        return int(sum(p.size for _, p in self.named_parameters()))

    def check_finite(self, where=""):
        for key, p in self.named_parameters():
            if not np.all(np.isfinite(p)):
                raise TrainingError(f"non-finite values in parameter {key}{where}")

    # ------------------------------------------------------------------ serialization

    def to_dict(self):
        layers = []
        for layer in self.layers:
            layers.append({
                "type": layer.kind,
                "config": layer.config(),
                "params": {
                    name: {"shape": list(arr.shape), "values": [float(v) for v in arr.ravel()]}
                    for name, arr in sorted(layer.params.items())
                },
            })
        return {
            "engine": ENGINE_TAG,
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, data):
        if "layers" not in data or "input_shape" not in data:
            raise SchemaError("network document needs 'layers' and 'input_shape'")
        layers = [layer_from_config(spec["type"], spec.get("config", {})) for spec in data["layers"]]
        net = cls(layers, data["input_shape"], name=data.get("name"))
        for layer, spec in zip(net.layers, data["layers"]):
            stored = spec.get("params", {})
            if set(stored) != set(layer.params):
                raise SchemaError(f"{layer.kind}: stored params {sorted(stored)} != expected {sorted(layer.params)}")
            for name, blob in stored.items():
                arr = np.asarray(blob["values"], dtype=np.float64).reshape(blob["shape"])
                if arr.shape != layer.params[name].shape:
                    raise SchemaError(f"{layer.kind}.{name}: shape {arr.shape} != {layer.params[name].shape}")
                layer.params[name] = arr
        return net

    def save(self, path):
        # json writes floats with repr(), the shortest string that parses back to the same double
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __repr__(self):
        inner = ", ".join(repr(layer) for layer in self.layers)
        return f"Network({self.name!r}, input_shape={self.input_shape}, layers=[{inner}])"
