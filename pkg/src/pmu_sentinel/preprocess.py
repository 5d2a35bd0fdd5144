"""Signal preparation: median filtering, angle unwrapping, scaling, splitting, windowing.

The functions operate on plain 1-D arrays. The transformer classes at the
bottom wrap them with the scikit-learn ``fit``/``transform`` protocol so they
can sit in a :class:`sklearn.pipeline.Pipeline`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_series, check_fraction, check_int, check_odd_order
from .exceptions import ParameterError, ShapeError

DEFAULT_FILTER_ORDER = 15
DEFAULT_WINDOW_LEN = 30
DEFAULT_HORIZON = 1


def median_filter(series, order=DEFAULT_FILTER_ORDER):
    """Running median over a centred window of ``order`` samples.

    The series is padded at both ends by repeating the boundary value, so the
    output has the same length as the input.
    """
    x = as_series(series)
    order = check_odd_order(order, length=x.size)
    if order == 1:
        return x.copy()
    half = order // 2
    padded = np.pad(x, half, mode="edge")
    return np.median(sliding_window_view(padded, order), axis=1)


def unwrap_angles(angles_deg):
    """Remove the artificial 360 degree jumps of a wrapped angle trace.

    Each consecutive difference is folded into (-180, 180] and the result is
    re-accumulated from the first sample, which is kept as is.
    """
    a = as_series(angles_deg, name="angles_deg", allow_empty=True)
    if a.size < 2:
        return a.copy()
    d = np.diff(a)
    # integer turn counts keep the correction an exact multiple of 360
    correction = -360.0 * np.ceil((d - 180.0) / 360.0)
    out = np.empty_like(a)
    out[0] = a[0]
    out[1:] = a[1:] + np.cumsum(correction)
    return out


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature minimum and maximum learned from the training portion."""

    data_min: np.ndarray
    data_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.data_min, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.data_max, dtype=np.float64))
        if lo.shape != hi.shape:
            raise ShapeError(f"min/max shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(hi < lo):
            raise ParameterError("scaler max must be >= min for every channel")
        object.__setattr__(self, "data_min", lo)
        object.__setattr__(self, "data_max", hi)

    def to_dict(self):
        return {
            "kind": "minmax",
            "feature_range": [0.0, 1.0],
            "data_min": [float(v) for v in self.data_min],
            "data_max": [float(v) for v in self.data_max],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["data_min"], dtype=np.float64), np.asarray(data["data_max"], dtype=np.float64))


def _as_2d(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim != 2:
        raise ShapeError(f"expected 1-D or 2-D data, got shape {arr.shape}")
    return arr, False


def fit_scaler(data) -> ScalerParams:
    """Learn per-column min/max. ``data`` is (n_samples,) or (n_samples, n_features)."""
    arr, _ = _as_2d(data)
    if arr.shape[0] == 0:
        raise ParameterError("cannot fit a scaler on empty data")
    return ScalerParams(arr.min(axis=0), arr.max(axis=0))


def apply_scaler(data, params: ScalerParams):
    """Map each column affinely onto [0, 1] using the fitted range.

    Values outside the training range land outside [0, 1] (no clipping). A
    constant training column maps to zeros.
    """
    arr, flat = _as_2d(data)
    span = params.data_max - params.data_min
    if arr.shape[1] != span.shape[0]:
        raise ShapeError(f"data has {arr.shape[1]} features, scaler has {span.shape[0]}")
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (arr - params.data_min) / safe, 0.0)
    return out[:, 0] if flat else out


def invert_scaler(data, params: ScalerParams):
    arr, flat = _as_2d(data)
    span = params.data_max - params.data_min
    if arr.shape[1] != span.shape[0]:
        raise ShapeError(f"data has {arr.shape[1]} features, scaler has {span.shape[0]}")
    out = arr * span + params.data_min
    return out[:, 0] if flat else out


def chronological_split(data, train_fraction=0.8):
    """Split along the first axis without shuffling: the first floor(N * fraction) rows train."""
    frac = check_fraction(train_fraction, "train_fraction")
    n = len(data)
    cut = int(np.floor(n * frac))
    return data[:cut], data[cut:]


def split_index(n, train_fraction=0.8):
    frac = check_fraction(train_fraction, "train_fraction")
    return int(np.floor(n * frac))


@dataclass(frozen=True)
class WindowedSet:
    """Supervised pairs for one-step-ahead forecasting.

    ``inputs`` has shape (num_windows, window_len, num_features) and
    ``targets`` (num_windows, 1). Target ``i`` is the value ``horizon``
    samples after the last input of window ``i``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    window_len: int
    horizon: int

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def window_offset(self):
        """Index of the first target relative to the start of the source series."""
        return self.window_len + self.horizon - 1

    def subset(self, start, stop=None):
        return WindowedSet(self.inputs[start:stop], self.targets[start:stop], self.window_len, self.horizon)


def make_windows(series, window_len=DEFAULT_WINDOW_LEN, horizon=DEFAULT_HORIZON, target_column=0):
    """Slice a series into overlapping input windows and their forecast targets.

    ``series`` may be 1-D or (n_samples, n_features); the target is taken
    from ``target_column``.
    """
    window_len = check_int(window_len, "window_len", minimum=1)
    horizon = check_int(horizon, "horizon", minimum=1)
    arr, _ = _as_2d(series)
    n = arr.shape[0]
    count = n - window_len - horizon + 1
    if count < 1:
        raise ParameterError(
            f"series of length {n} is too short for window_len={window_len}, horizon={horizon}"
        )
    # (count, n_features, window_len) -> (count, window_len, n_features)
    view = sliding_window_view(arr[: n - horizon], window_len, axis=0)
    inputs = np.ascontiguousarray(np.swapaxes(view, 1, 2))
    targets = arr[window_len + horizon - 1 :, target_column][:, None].copy()
    return WindowedSet(inputs, targets, window_len, horizon)


def noise_floor(series):
    """Median absolute deviation of the first difference of ``series``."""
    d = np.diff(as_series(series))
    if d.size == 0:
        return 0.0
    return float(np.median(np.abs(d - np.median(d))))


class MedianFilter(TransformerMixin, BaseEstimator):
    """Column-wise running-median smoother (stateless).

    Parameters
    ----------
    order : int, default=15
        Odd window length in samples.
    """

    def __init__(self, order=DEFAULT_FILTER_ORDER):
        self.order = order

    def fit(self, X, y=None):
        check_odd_order(self.order)
        return self

    def transform(self, X):
        arr, flat = _as_2d(X)
        out = np.column_stack([median_filter(arr[:, j], self.order) for j in range(arr.shape[1])])
        return out[:, 0] if flat else out


class AngleUnwrapper(TransformerMixin, BaseEstimator):
    """Column-wise angle unwrapping for degree-valued traces."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        arr, flat = _as_2d(X)
        out = np.column_stack([unwrap_angles(arr[:, j]) for j in range(arr.shape[1])])
        return out[:, 0] if flat else out


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Scale each feature to [0, 1] by the range seen in ``fit``.

    Unlike the scikit-learn scaler of the same name, a constant feature maps
    to 0 and ``params_`` exposes the fitted :class:`ScalerParams`.
    """

    def fit(self, X, y=None):
        self.params_ = fit_scaler(X)
        self.n_features_in_ = self.params_.data_min.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return apply_scaler(X, self.params_)

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        return invert_scaler(X, self.params_)
