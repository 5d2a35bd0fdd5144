import numpy as np
import pytest
from sklearn.base import clone

from pmu_sentinel.exceptions import ParameterError, ShapeError
from pmu_sentinel.models import (
    MODEL_NAMES,
    Forecaster,
    SearchSpace,
    TrainConfig,
    build,
    canonical_name,
    grid_search,
    load_history,
    save_history,
    train,
)
from pmu_sentinel.nn import mse
from pmu_sentinel.preprocess import make_windows


def _kinds(spec):
    return [layer.kind for layer in spec.layers]


def _cfg(layer):
    return dict(layer.config)


def test_cnn_layers_follow_table():
    spec = build("CNN")
    assert _kinds(spec) == ["conv1d", "conv1d", "conv1d", "maxpool1d", "flatten", "dense", "dense"]
    assert _cfg(spec.layers[0]) == {"filters": 32, "kernel_size": 3, "activation": "relu"}
    assert [_cfg(layer)["filters"] for layer in spec.layers[:3]] == [32, 16, 64]
    assert _cfg(spec.layers[3])["pool_size"] == 2
    assert _cfg(spec.layers[5]) == {"units": 50, "activation": "relu"}


def test_lstm_layers_follow_table():
    spec = build("LSTM")
    assert _kinds(spec) == ["lstm", "dropout", "lstm", "dense"]
    assert _cfg(spec.layers[0])["units"] == 64 and _cfg(spec.layers[0])["return_sequences"]
    assert _cfg(spec.layers[1])["rate"] == 0.12
    assert _cfg(spec.layers[2])["units"] == 32


def test_bilstm_units_per_direction():
    assert _cfg(build("BiLSTM").layers[0])["units"] == 64
    assert _cfg(build("BiLSTM", bilstm_per_direction=False).layers[0])["units"] == 32


def test_clstm_has_two_dropouts():
    spec = build("CLSTM")
    rates = [_cfg(layer)["rate"] for layer in spec.layers if layer.kind == "dropout"]
    assert rates == [0.12, 0.12]
    assert _cfg(spec.layers[0]) == {"filters": 64, "kernel_size": 3, "activation": "relu"}


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_every_model_ends_in_single_dense_unit(name):
    last = build(name).layers[-1]
    assert last.kind == "dense" and _cfg(last) == {"units": 1, "activation": "linear"}
    net = build(name, width=0.1).to_network((10, 1))
    assert net.predict(np.zeros((2, 10, 1))).shape == (2, 1)


def test_model_aliases():
    assert canonical_name("c-lstm") == "CLSTM"
    assert canonical_name("Bi-LSTM") == "BiLSTM"
    with pytest.raises(ParameterError):
        canonical_name("transformer")


def test_constant_target_is_learned():
    ws = make_windows(np.full(200, 0.5), 10, 1)
    net, history = train(build("LSTM", width=0.25, dropout=0.0), ws,
                         TrainConfig(epochs=20, batch_size=8, seed=0, validation_fraction=0))
    assert len(history) <= 20
    assert mse(ws.targets, net.predict(ws.inputs)) < 1e-6


def _sine(n=400, period=25):
    return 0.5 + 0.4 * np.sin(2 * np.pi * np.arange(n) / period)


def test_training_is_deterministic():
    ws = make_windows(_sine(200), 10, 1)
    cfg = TrainConfig(epochs=3, batch_size=16, seed=4)
    _, h1 = train(build("CLSTM", width=0.1), ws, cfg)
    _, h2 = train(build("CLSTM", width=0.1), ws, cfg)
    assert h1 == h2


def test_training_reduces_loss_on_sinusoid():
    ws = make_windows(_sine(), 10, 1)
    _, history = train(build("LSTM", width=0.25), ws, TrainConfig(epochs=6, batch_size=16, seed=1))
    assert history[-1].train_mse < history[0].train_mse


def test_zero_patience_stops_after_first_non_improvement():
    ws = make_windows(np.full(120, 0.5), 10, 1)
    # a huge step makes the second epoch worse than the first
    _, history = train(build("LSTM", width=0.1), ws,
                       TrainConfig(epochs=10, batch_size=8, learning_rate=0.5, seed=0, early_stop_patience=0))
    vals = [h.val_mse for h in history]
    assert len(history) < 10
    # every epoch but the last improved on the best so far; the last one did not
    assert all(vals[i] < min(vals[:i]) for i in range(1, len(vals) - 1))
    assert vals[-1] >= min(vals[:-1])


def test_history_round_trip(tmp_path):
    ws = make_windows(_sine(120), 10, 1)
    _, history = train(build("CNN", width=0.25), ws, TrainConfig(epochs=2, seed=0))
    save_history(history, tmp_path / "h.csv")
    assert load_history(tmp_path / "h.csv") == history


def test_train_rejects_empty_set():
    ws = make_windows(_sine(20), 10, 1).subset(0, 0)
    with pytest.raises(ShapeError):
        train(build("LSTM", width=0.1), ws)


def test_train_config_rejects_unknown_key():
    with pytest.raises(ParameterError):
        TrainConfig.from_dict({"epochs": 2, "momentum": 0.9})


def _search_data():
    s = _sine()
    return make_windows(s[:300], 10, 1), make_windows(s[290:], 10, 1)


def test_single_configuration_search():
    tr, va = _search_data()
    res = grid_search(SearchSpace(hidden_units=(4,)), tr, va, budget=3, width=1.0,
                      base_config=TrainConfig(epochs=1, batch_size=32))
    assert len(res) == 1 and res[0].params["hidden_units"] == 4


def test_budget_limits_trials():
    tr, va = _search_data()
    space = SearchSpace(hidden_units=(2, 3, 4), learning_rates=(1e-3, 1e-2))
    res = grid_search(space, tr, va, budget=2, base_config=TrainConfig(epochs=1, batch_size=64), seed=3)
    assert len(space) == 6 and len(res) == 2
    assert len({r.trial for r in res}) == 2
    assert [r.val_mse for r in res] == sorted(r.val_mse for r in res)


def test_table_scale_beats_one_unit():
    tr, va = _search_data()
    res = grid_search(SearchSpace(hidden_units=(64, 1)), tr, va, budget=2,
                      base_config=TrainConfig(epochs=5, batch_size=16), seed=0)
    assert res[0].params["hidden_units"] == 64


def test_threaded_search_matches_serial():
    tr, va = _search_data()
    space = SearchSpace(hidden_units=(2, 3))
    cfg = TrainConfig(epochs=1, batch_size=64)
    serial = grid_search(space, tr, va, budget=2, base_config=cfg)
    threaded = grid_search(space, tr, va, budget=2, base_config=cfg, n_jobs=2)
    assert [(r.trial, r.val_mse) for r in serial] == [(r.trial, r.val_mse) for r in threaded]


def test_forecaster_estimator_api():
    est = Forecaster(model="LSTM", epochs=2, width=0.1, seed=2)
    assert est.get_params()["model"] == "LSTM"
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    ws = make_windows(_sine(150), 10, 1)
    est.fit(ws.inputs[:, :, 0], ws.targets[:, 0])
    pred = est.predict(ws.inputs[:, :, 0])
    assert pred.shape == (len(ws),)
    np.testing.assert_array_equal(pred, twin.fit(ws.inputs, ws.targets).predict(ws.inputs))


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_build_is_pure_data(name):
    assert build(name) == build(name)
    assert build(name).as_dict() == build(name).as_dict()
