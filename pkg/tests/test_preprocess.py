import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.pipeline import make_pipeline

from pmu_sentinel.data import wrap_angle
from pmu_sentinel.exceptions import ParameterError
from pmu_sentinel.preprocess import (
    AngleUnwrapper,
    MedianFilter,
    MinMaxScaler,
    apply_scaler,
    chronological_split,
    fit_scaler,
    invert_scaler,
    make_windows,
    median_filter,
    noise_floor,
    unwrap_angles,
)


def brute_median(x, order):
    half = order // 2
    out = []
    for i in range(len(x)):
        window = [x[min(max(j, 0), len(x) - 1)] for j in range(i - half, i + half + 1)]
        out.append(sorted(window)[half])
    return np.array(out)


def test_median_order_one_is_identity():
    x = np.random.default_rng(0).normal(size=50)
    np.testing.assert_array_equal(median_filter(x, 1), x)


def test_median_worked_example():
    np.testing.assert_array_equal(median_filter([1, 9, 2, 8, 3], 3), [1, 2, 8, 3, 3])


@pytest.mark.parametrize("order", [1, 3, 5, 15])
def test_median_constant_series(order):
    np.testing.assert_array_equal(median_filter(np.full(20, 7.25), order), np.full(20, 7.25))


@pytest.mark.parametrize("order", [0, -3, 2, 4])
def test_median_rejects_bad_order(order):
    with pytest.raises(ParameterError):
        median_filter([1.0, 2.0, 3.0, 4.0, 5.0], order)


def test_median_rejects_order_longer_than_series():
    with pytest.raises(ParameterError):
        median_filter([1.0, 2.0, 3.0], 5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.sampled_from([1, 3, 5, 7, 9]))
def test_median_matches_brute_force(values, order):
    if order > len(values):
        order = 1
    np.testing.assert_array_equal(median_filter(values, order), brute_median(values, order))


def test_median_removes_short_spike():
    x = np.full(40, 2.0)
    x[20] = 50.0
    x[21] = 60.0  # two-sample spike, shorter than order // 2
    np.testing.assert_array_equal(median_filter(x, 15), np.full(40, 2.0))


def test_median_order_three_fixed_point_on_steps():
    x = np.repeat([0.0, 3.0, 1.0, 5.0], 10)
    once = median_filter(x, 3)
    np.testing.assert_array_equal(median_filter(once, 3), once)


def test_unwrap_no_wrap_present():
    np.testing.assert_array_equal(unwrap_angles([0, 10, 20]), [0, 10, 20])


def test_unwrap_single_correction():
    np.testing.assert_allclose(unwrap_angles([170, -175]), [170, 185])


def test_unwrap_recovers_linear_ramp():
    ramp = 12.0 + 0.37 * np.arange(10_000)
    out = unwrap_angles(wrap_angle(ramp))
    offset = out - ramp
    assert np.all(np.abs(offset - offset[0]) < 1e-9)
    assert abs(offset[0] / 360.0 - round(offset[0] / 360.0)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-180, 180, exclude_min=True), min_size=1, max_size=200))
def test_unwrap_properties(angles):
    a = np.array(angles)
    out = unwrap_angles(a)
    assert out[0] == a[0]
    d = np.diff(out)
    assert np.all(d > -180 - 1e-9) and np.all(d <= 180 + 1e-9)
    k = (out - a) / 360.0
    assert np.all(np.abs(k - np.round(k)) < 1e-9)


def test_scaler_endpoints():
    p = fit_scaler([0.0, 5.0, 10.0])
    np.testing.assert_allclose(apply_scaler([0.0, 5.0, 10.0], p), [0.0, 0.5, 1.0])


def test_scaler_constant_channel_maps_to_zero():
    p = fit_scaler([7.0, 7.0, 7.0])
    np.testing.assert_array_equal(apply_scaler([7.0, 7.0, 7.0], p), [0.0, 0.0, 0.0])


def test_scaler_round_trip_and_no_clipping():
    rng = np.random.default_rng(5)
    x = rng.normal(100.0, 20.0, size=(500, 3))
    p = fit_scaler(x[:400])
    z = apply_scaler(x, p)
    assert z[:400].min() == 0.0 and z[:400].max() == 1.0
    np.testing.assert_allclose(invert_scaler(apply_scaler(x[:400], p), p), x[:400], rtol=0, atol=1e-12 * 200)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=100))
def test_scaled_training_part_within_unit_interval(values):
    z = apply_scaler(values, fit_scaler(values))
    assert np.all(z >= 0.0) and np.all(z <= 1.0)


def test_test_values_outside_range_are_not_clamped():
    p = fit_scaler([0.0, 10.0])
    np.testing.assert_allclose(apply_scaler([-5.0, 20.0], p), [-0.5, 2.0])


@pytest.mark.parametrize("n,expected", [(10, (8, 2)), (5, (4, 1))])
def test_split_lengths(n, expected):
    train, test = chronological_split(np.arange(n), 0.8)
    assert (len(train), len(test)) == expected
    np.testing.assert_array_equal(np.concatenate([train, test]), np.arange(n))


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
def test_split_rejects_fraction(fraction):
    with pytest.raises(ParameterError):
        chronological_split(np.arange(10), fraction)


def test_windows_tiny_case():
    ws = make_windows([1, 2, 3, 4], window_len=2, horizon=1)
    np.testing.assert_array_equal(ws.inputs[:, :, 0], [[1, 2], [2, 3]])
    np.testing.assert_array_equal(ws.targets[:, 0], [3, 4])
    assert ws.window_offset == 2


def test_windows_boundary_single_window():
    ws = make_windows(np.arange(10.0), window_len=9, horizon=1)
    assert len(ws) == 1


def test_windows_too_short():
    with pytest.raises(ParameterError):
        make_windows(np.arange(5.0), window_len=5, horizon=1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 80), st.integers(1, 10), st.integers(1, 5))
def test_window_count_matches_enumeration(n, window_len, horizon):
    series = np.arange(n, dtype=float) * 1.5
    expected = [(series[s : s + window_len], series[s + window_len + horizon - 1])
                for s in range(n) if s + window_len + horizon - 1 < n]
    if not expected:
        with pytest.raises(ParameterError):
            make_windows(series, window_len, horizon)
        return
    ws = make_windows(series, window_len, horizon)
    assert len(ws) == n - window_len - horizon + 1 == len(expected)
    for i, (win, tgt) in enumerate(expected):
        np.testing.assert_array_equal(ws.inputs[i, :, 0], win)
        assert ws.targets[i, 0] == tgt


def test_multifeature_windows_take_target_column():
    series = np.column_stack([np.arange(6.0), 10 * np.arange(6.0)])
    ws = make_windows(series, 3, 1, target_column=1)
    assert ws.inputs.shape == (3, 3, 2)
    np.testing.assert_array_equal(ws.targets[:, 0], [30, 40, 50])


def test_noise_floor_of_white_noise():
    x = np.random.default_rng(0).normal(0, 2.0, 50_000)
    # MAD of a N(0, 2 * sqrt(2)^2) difference is 0.6745 * 2 * sqrt(2)
    assert noise_floor(x) == pytest.approx(0.6745 * 2 * np.sqrt(2), rel=0.03)


def test_transformers_compose_in_sklearn_pipeline():
    angles = wrap_angle(np.linspace(0, 2000, 300))
    pipe = make_pipeline(AngleUnwrapper(), MedianFilter(order=3), MinMaxScaler())
    z = pipe.fit_transform(angles)
    assert z.shape == (300,)
    assert z.min() == 0.0 and z.max() == 1.0
    assert MedianFilter(order=5).get_params() == {"order": 5}
