import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pmu_sentinel.data import SynthConfig, generate_synthetic, select_series
from pmu_sentinel.detect import (
    DetectionResult,
    ResidualDetector,
    StatisticalDetector,
    apply_threshold,
    calibrate_threshold,
    residual_scores,
    robust_scale,
    statistical_baseline,
)
from pmu_sentinel.exceptions import ParameterError, ShapeError
from pmu_sentinel.inject import default_sigma, inject_series
from pmu_sentinel.models import Forecaster
from pmu_sentinel.preprocess import make_windows, median_filter


class _Oracle:
    """Predicts fixed values regardless of input."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def predict(self, X):
        return self.values[: len(X)]


def test_perfect_predictor_scores_zero():
    ws = make_windows(np.arange(20.0), 5, 1)
    scores = residual_scores(_Oracle(ws.targets[:, 0]), ws)
    assert scores.shape == (len(ws),)
    np.testing.assert_array_equal(scores, 0.0)


def test_single_residual_hand_value():
    ws = make_windows(np.ones(6), 3, 1)
    pred = np.ones(len(ws))
    pred[1] = 0.5
    scores = residual_scores(_Oracle(pred), ws)
    assert scores[1] == 0.25 and scores.sum() == 0.25


def test_predictor_with_wrong_length():
    ws = make_windows(np.ones(10), 3, 1)
    with pytest.raises(ShapeError):
        residual_scores(_Oracle(np.ones(2)), ws)


def test_threshold_of_zero_scores():
    for k in (0.5, 3.0, 10.0):
        assert calibrate_threshold(np.zeros(50), k) == 0.0


def test_threshold_hand_statistics():
    assert calibrate_threshold([0.0, 0.0, 0.0, 4.0], k=1) == pytest.approx(1.0 + math.sqrt(3.0))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(0, 1e3)),
       st.floats(0.1, 10), st.floats(0.1, 10))
def test_threshold_monotone_in_k(scores, k1, k2):
    lo, hi = sorted((k1, k2))
    assert calibrate_threshold(scores, lo) <= calibrate_threshold(scores, hi)


def test_threshold_rejects_bad_input():
    with pytest.raises(ParameterError):
        calibrate_threshold([], 3)
    with pytest.raises(ParameterError):
        calibrate_threshold([1.0], 0)


def test_infinite_and_negative_thresholds():
    scores = np.random.default_rng(0).random(30)
    assert not apply_threshold(scores, np.inf).flags.any()
    assert apply_threshold(scores, -1.0).flags.all()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(0, 80), elements=st.floats(0, 10)), st.floats(0, 10))
def test_flags_match_elementwise_comparison(scores, thr):
    res = apply_threshold(scores, thr)
    assert res.flags.tolist() == [s > thr for s in scores.tolist()]
    assert res.is_consistent()


def test_detection_csv_round_trip(tmp_path):
    res = apply_threshold(np.random.default_rng(1).random(40) * 1e-3, 5e-4, window_offset=10)
    res.save_csv(tmp_path / "s.csv")
    back = DetectionResult.load_csv(tmp_path / "s.csv", res.threshold, 10)
    np.testing.assert_array_equal(back.scores, res.scores)
    np.testing.assert_array_equal(back.flags, res.flags)


def test_baseline_constant_series():
    assert not statistical_baseline(np.full(100, 3.0)).any()


def test_baseline_flags_spike():
    x = np.full(100, 3.0)
    x[40] = 30.0
    flags = statistical_baseline(x)
    assert flags[40] and flags.sum() == 1


def test_robust_scale_falls_back_when_mad_is_zero():
    r = np.zeros(10)
    r[3] = 5.0
    assert robust_scale(r) == pytest.approx(0.5)


def test_baseline_finds_injected_bursts():
    cfg = SynthConfig(duration=600.0, noise_floor_sigma=1.0, seed=21)
    raw = select_series(generate_synthetic(cfg), "S1", "vmag")
    smooth = median_filter(raw, 15)
    noisy, mask = inject_series(smooth, 10, default_sigma(raw), seed=22)
    flags = statistical_baseline(noisy, 15, 4.0)
    assert flags[mask.flags].mean() >= 0.8


def test_statistical_detector_estimator():
    x = np.full(60, 1.0)
    x[10] = 9.0
    det = StatisticalDetector(z_threshold=4.0)
    assert det.get_params() == {"filter_order": 15, "z_threshold": 4.0}
    assert det.fit(x).predict(x).tolist() == statistical_baseline(x).astype(int).tolist()


def test_residual_detector_estimator():
    s = 0.5 + 0.4 * np.sin(2 * np.pi * np.arange(300) / 25)
    ws = make_windows(s, 10, 1)
    det = ResidualDetector(Forecaster(model="CNN", epochs=2, width=0.25), k=3.0).fit(ws.inputs, ws.targets)
    scores = det.score_samples(ws.inputs, ws.targets)
    assert det.threshold_ == pytest.approx(scores.mean() + 3.0 * scores.std())
    assert det.predict(ws.inputs, ws.targets).tolist() == (scores > det.threshold_).astype(int).tolist()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 10)), st.floats(0, 10), st.floats(0, 10))
def test_flags_monotone_in_threshold(scores, t1, t2):
    lo, hi = sorted((t1, t2))
    assert np.all(apply_threshold(scores, hi).flags <= apply_threshold(scores, lo).flags)


def test_baseline_invariant_to_offset():
    x = np.random.default_rng(4).normal(size=300)
    x[100:130] += np.random.default_rng(5).normal(0, 6, 30)
    np.testing.assert_array_equal(statistical_baseline(x), statistical_baseline(x + 250.0))
