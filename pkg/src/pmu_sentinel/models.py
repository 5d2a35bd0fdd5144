"""The four forecasting architectures, their training loop and hyperparameter search."""

from __future__ import annotations

import csv
import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int
from .exceptions import ParameterError, ShapeError, TrainingError
from .nn import Network, mse, mse_grad
from .nn.layers import layer_from_config
from .nn.optim import Adam
from .preprocess import WindowedSet

log = logging.getLogger(__name__)

MODEL_NAMES = ("CNN", "LSTM", "BiLSTM", "CLSTM")
_ALIASES = {"cnn": "CNN", "lstm": "LSTM", "bilstm": "BiLSTM", "bi-lstm": "BiLSTM",
            "clstm": "CLSTM", "c-lstm": "CLSTM"}
TABLE_DROPOUT = 0.12


def canonical_name(name):
    try:
        return _ALIASES[str(name).strip().lower()]
    except KeyError:
        raise ParameterError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}") from None


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    config: tuple  # sorted (key, value) pairs so specs stay hashable

    @classmethod
    def of(cls, kind, **config):
        return cls(kind, tuple(sorted(config.items())))

    def as_dict(self):
        return {"type": self.kind, "config": dict(self.config)}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative layer stack; ``to_network`` instantiates it with fresh weights."""

    name: str
    layers: tuple

    def to_network(self, input_shape, seed=0):
        layers = [layer_from_config(ls.kind, dict(ls.config)) for ls in self.layers]
        return Network(layers, input_shape, seed=seed, name=self.name)

    def as_dict(self):
        return {"name": self.name, "layers": [ls.as_dict() for ls in self.layers]}


def _scaled(units, width):
    return max(1, int(round(units * width)))


def build(name, *, width=1.0, filters=None, kernel_size=None, hidden_units=None, dropout=None,
          bilstm_per_direction=True) -> ModelSpec:
    """Layer stack of one of the four architectures, reference sizes by default.

    Overrides, used by :func:`grid_search`:

    * ``filters`` sets the first convolution's filter count; the other
      convolutions keep their ratio to it.
    * ``kernel_size`` applies to every convolution.
    * ``hidden_units`` sets the first recurrent layer (the second gets half)
      or, for the CNN, the hidden dense layer.
    * ``dropout`` replaces every dropout rate.
    * ``width`` multiplies every layer size (handy for small test networks).

    ``bilstm_per_direction=False`` splits the Bi-LSTM's 64 units across the
    two directions instead of giving 64 to each.
    """
    name = canonical_name(name)
    k = 3 if kernel_size is None else int(kernel_size)
    rate = TABLE_DROPOUT if dropout is None else float(dropout)
    L = LayerSpec.of

    if name == "CNN":
        base = (32, 16, 64)
        first = base[0] if filters is None else int(filters)
        convs = [_scaled(f * first / base[0], width) for f in base]
        dense_units = _scaled(50 if hidden_units is None else hidden_units, width)
        layers = [L("conv1d", filters=f, kernel_size=k, activation="relu") for f in convs]
        layers += [L("maxpool1d", pool_size=2), L("flatten"),
                   L("dense", units=dense_units, activation="relu"), L("dense", units=1, activation="linear")]
        return ModelSpec(name, tuple(layers))

    h1 = 64 if hidden_units is None else int(hidden_units)
    h2 = max(1, h1 // 2)
    h1, h2 = _scaled(h1, width), _scaled(h2, width)

    if name == "LSTM":
        layers = [L("lstm", units=h1, return_sequences=True, reverse=False), L("dropout", rate=rate),
                  L("lstm", units=h2, return_sequences=False, reverse=False)]
    elif name == "BiLSTM":
        per_dir = h1 if bilstm_per_direction else max(1, h1 // 2)
        layers = [L("bilstm", units=per_dir, return_sequences=True), L("dropout", rate=rate),
                  L("lstm", units=h2, return_sequences=False, reverse=False)]
    else:  # CLSTM
        f = _scaled(64 if filters is None else int(filters), width)
        layers = [L("conv1d", filters=f, kernel_size=k, activation="relu"),
                  L("lstm", units=h1, return_sequences=True, reverse=False), L("dropout", rate=rate),
                  L("lstm", units=h2, return_sequences=False, reverse=False), L("dropout", rate=rate)]
    layers.append(L("dense", units=1, activation="linear"))
    return ModelSpec(name, tuple(layers))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    early_stop_patience: int | None = 5
    validation_fraction: float = 0.1

    def __post_init__(self):
        check_int(self.epochs, "epochs", minimum=1)
        check_int(self.batch_size, "batch_size", minimum=1)
        if self.early_stop_patience is not None:
            check_int(self.early_stop_patience, "early_stop_patience", minimum=0)
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ParameterError("validation_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float | None


def _derive_seeds(seed, n):
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


def _evaluate(net, inputs, targets, batch_size=1024):
    return mse(targets, net.predict(inputs, batch_size=batch_size))


def train(spec: ModelSpec, windowed: WindowedSet, config: TrainConfig = TrainConfig(), validation=None):
    """Fit ``spec`` as a one-step-ahead forecaster by mini-batch Adam on the MSE.

    Unless ``validation`` is given, the last ``config.validation_fraction`` of
    the windows (in time order) is held out for early stopping. The weights
    of the best monitored epoch are restored on exit.

    Returns ``(network, history)`` with one :class:`EpochRecord` per epoch run.
    """
    if len(windowed) == 0:
        raise ShapeError("training set has no windows")
    X, y = windowed.inputs, windowed.targets
    if y.ndim != 2 or y.shape[1] != 1 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"targets must have shape ({X.shape[0]}, 1), got {y.shape}")
    if validation is None and config.validation_fraction > 0:
        n_val = int(np.floor(len(windowed) * config.validation_fraction))
        if n_val >= 1 and len(windowed) - n_val >= 1:
            validation = windowed.subset(len(windowed) - n_val)
            X, y = X[:-n_val], y[:-n_val]

    init_seed, shuffle_seed, dropout_seed = _derive_seeds(config.seed, 3)
    net = spec.to_network(X.shape[1:], seed=init_seed)
    net.reseed(dropout_seed)
    order_rng = np.random.default_rng(shuffle_seed)
    opt = Adam(lr=config.learning_rate)

    history = []
    best, best_params, since_best = np.inf, None, 0
    n = X.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            out = net.forward(X[idx], training=True)
            loss = mse(y[idx], out)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {b}")
            net.backward(mse_grad(y[idx], out))
            opt.step(net.parameters(), net.gradients())
        net.check_finite(f" after epoch {epoch}")
        train_mse = _evaluate(net, X, y)
        val_mse = _evaluate(net, validation.inputs, validation.targets) if validation is not None else None
        if not np.isfinite(train_mse) or (val_mse is not None and not np.isfinite(val_mse)):
            raise TrainingError(f"non-finite evaluation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, train_mse, val_mse))
        log.debug("%s epoch %d train_mse=%.3e val_mse=%s", spec.name, epoch, train_mse, val_mse)

        monitored = val_mse if val_mse is not None else train_mse
        if monitored < best:
            best, since_best = monitored, 0
            best_params = {k: v.copy() for k, v in net.named_parameters()}
        else:
            since_best += 1
            if config.early_stop_patience is not None and since_best > config.early_stop_patience:
                break

    if best_params is not None:
        for key, arr in net.named_parameters():
            arr[...] = best_params[key]
    return net, history


def save_history(history, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for rec in history:
            val = "" if rec.val_mse is None else repr(rec.val_mse)
            fh.write(f"{rec.epoch},{rec.train_mse!r},{val}\n")


def load_history(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return [EpochRecord(int(r["epoch"]), float(r["train_mse"]), float(r["val_mse"]) if r["val_mse"] else None)
                for r in csv.DictReader(fh)]


# --------------------------------------------------------------------------- search


@dataclass(frozen=True)
class SearchSpace:
    """Candidate values per hyperparameter; the search runs over their product."""

    filters: tuple = (64,)
    kernel_sizes: tuple = (3,)
    hidden_units: tuple = (64,)
    dropout_rates: tuple = (TABLE_DROPOUT,)
    learning_rates: tuple = (1e-3,)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            values = tuple(getattr(self, name))
            if not values:
                raise ParameterError(f"search space entry {name!r} is empty")
            object.__setattr__(self, name, values)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown search space keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})

    def grid(self):
        keys = ("filters", "kernel_size", "hidden_units", "dropout", "learning_rate")
        return [dict(zip(keys, combo)) for combo in itertools.product(
            self.filters, self.kernel_sizes, self.hidden_units, self.dropout_rates, self.learning_rates)]

    def __len__(self):
        return int(np.prod([len(getattr(self, n)) for n in self.__dataclass_fields__]))


@dataclass
class TrialResult:
    trial: int
    params: dict
    val_mse: float
    history: list = field(repr=False, default_factory=list)


def trial_seed(master_seed, trial):
    """Seed of trial ``trial``, derived from the master seed independently of other trials."""
    return int(np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),)).generate_state(1)[0])


def grid_search(space: SearchSpace, windowed_train, windowed_val, budget, model="LSTM",
                base_config: TrainConfig = TrainConfig(), seed=0, n_jobs=1, width=1.0):
    """Train one model per configuration and rank them by validation MSE.

    The whole grid is evaluated when it has at most ``budget`` points,
    otherwise ``budget`` distinct points are drawn uniformly at random.
    Results are sorted by ascending validation MSE (ties by trial index).
    """
    budget = check_int(budget, "budget", minimum=1)
    if len(space) == 0:
        raise ParameterError("search space is empty")
    grid = space.grid()
    if len(grid) <= budget:
        chosen = list(range(len(grid)))
    else:
        chosen = sorted(np.random.default_rng(seed).choice(len(grid), size=budget, replace=False).tolist())

    def run(trial):
        params = grid[trial]
        spec = build(model, width=width, filters=params["filters"], kernel_size=params["kernel_size"],
                     hidden_units=params["hidden_units"], dropout=params["dropout"])
        cfg = replace(base_config, learning_rate=params["learning_rate"], seed=trial_seed(seed, trial))
        net, history = train(spec, windowed_train, cfg, validation=windowed_val)
        val = _evaluate(net, windowed_val.inputs, windowed_val.targets)
        return TrialResult(trial, dict(params), val, history)

    if n_jobs is None or n_jobs <= 1:
        results = [run(t) for t in chosen]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, chosen))
    return sorted(results, key=lambda r: (r.val_mse, r.trial))


# --------------------------------------------------------------------------- estimator


def _as_windows(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ShapeError(f"expected windows of shape (n, window_len[, features]), got {X.shape}")
    return X


class Forecaster(RegressorMixin, BaseEstimator):
    """One-step-ahead forecaster wrapping one of the four architectures.

    ``fit`` takes windows ``X`` of shape (n, window_len) or
    (n, window_len, features) and targets ``y`` of shape (n,) or (n, 1).
    """

    def __init__(self, model="CLSTM", epochs=30, batch_size=32, learning_rate=1e-3, seed=0,
                 early_stop_patience=5, validation_fraction=0.1, width=1.0, filters=None,
                 kernel_size=None, hidden_units=None, dropout=None, bilstm_per_direction=True):
        self.model = model
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.width = width
        self.filters = filters
        self.kernel_size = kernel_size
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.bilstm_per_direction = bilstm_per_direction

    def _spec(self):
        return build(self.model, width=self.width, filters=self.filters, kernel_size=self.kernel_size,
                     hidden_units=self.hidden_units, dropout=self.dropout,
                     bilstm_per_direction=self.bilstm_per_direction)

    def _train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           seed=self.seed, early_stop_patience=self.early_stop_patience,
                           validation_fraction=self.validation_fraction)

    def fit(self, X, y):
        X = _as_windows(X)
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} windows but y has {y.shape[0]} targets")
        ws = WindowedSet(X, y, X.shape[1], 1)
        self.spec_ = self._spec()
        self.network_, self.history_ = train(self.spec_, ws, self._train_config())
        self.n_features_in_ = X.shape[2]
        return self

    @classmethod
    def from_network(cls, network, **params):
        """Wrap an already trained network (e.g. loaded from JSON)."""
        est = cls(model=network.name or "CLSTM", **params)
        est.network_ = network
        est.history_ = []
        est.n_features_in_ = network.input_shape[-1]
        return est

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.network_.predict(_as_windows(X))[:, 0]


def default_threads():
    """Worker count from ``PMU_SENTINEL_THREADS`` (default 1)."""
    raw = os.environ.get("PMU_SENTINEL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"PMU_SENTINEL_THREADS must be an integer, got {raw!r}") from None
