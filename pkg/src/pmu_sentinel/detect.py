"""Residual-threshold anomaly detection and a model-free median/MAD baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_series
from .exceptions import ParameterError, ShapeError
from .preprocess import DEFAULT_FILTER_ORDER, WindowedSet, median_filter

DEFAULT_K = 3.0
DEFAULT_Z = 4.0


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Scores, the threshold applied to them and the resulting flags.

    ``scores[i]`` belongs to source index ``window_offset + i``.
    """

    scores: np.ndarray
    threshold: float
    flags: np.ndarray
    window_offset: int = 0

    def __len__(self):
        return self.scores.shape[0]

    def is_consistent(self):
        return bool(
            self.scores.shape == self.flags.shape
            and np.all(self.scores >= 0)
            and np.array_equal(self.flags, self.scores > self.threshold)
        )

    def save_csv(self, path, index_offset=0):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("index,score,flag\n")
            for i, (s, f) in enumerate(zip(self.scores, self.flags)):
                fh.write(f"{i + index_offset},{float(s)!r},{int(f)}\n")

    @classmethod
    def load_csv(cls, path, threshold, window_offset=0):
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        scores = np.array([float(r["score"]) for r in rows])
        flags = np.array([int(r["flag"]) for r in rows], dtype=bool)
        return cls(scores, float(threshold), flags, window_offset)


def squared_errors(y, y_hat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise ShapeError(f"targets {y.shape} and predictions {y_hat.shape} differ")
    return (y - y_hat) ** 2


def residual_scores(network, windowed: WindowedSet):
    """Per-window squared one-step forecast error of ``network``.

    Anything with a ``predict`` method returning one value per window works
    (a :class:`~pmu_sentinel.nn.Network` or a fitted ``Forecaster``).
    """
    pred = np.asarray(network.predict(windowed.inputs), dtype=np.float64).reshape(-1)
    if pred.shape[0] != len(windowed):
        raise ShapeError(f"predictor returned {pred.shape[0]} values for {len(windowed)} windows")
    return squared_errors(windowed.targets, pred)


def calibrate_threshold(train_scores, k=DEFAULT_K):
    """Global threshold ``mean + k * std`` (population std) of the training scores."""
    scores = np.asarray(train_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ParameterError("cannot calibrate a threshold from no scores")
    if not k > 0:
        raise ParameterError(f"k must be > 0, got {k}")
    return float(scores.mean() + k * scores.std())


def apply_threshold(scores, threshold, window_offset=0) -> DetectionResult:
    """Flag every score strictly above ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    threshold = float(threshold)
    if np.isnan(threshold):
        raise ParameterError("threshold must not be NaN")
    return DetectionResult(scores, threshold, scores > threshold, int(window_offset))


def robust_scale(residual):
    """Median absolute deviation, falling back to the mean absolute deviation when the MAD is 0."""
    r = np.asarray(residual, dtype=np.float64)
    dev = np.abs(r - np.median(r))
    mad = float(np.median(dev))
    return mad if mad > 0 else float(dev.mean())


def statistical_baseline(series, filter_order=DEFAULT_FILTER_ORDER, z_threshold=DEFAULT_Z):
    """Flag samples that stand out from their running median.

    A sample is flagged when ``|x - median_filter(x)|`` exceeds
    ``z_threshold`` times the robust scale of that residual.
    """
    x = as_series(series)
    residual = x - median_filter(x, filter_order)
    scale = robust_scale(residual)
    return np.abs(residual) > z_threshold * scale


class ResidualDetector(OutlierMixin, BaseEstimator):
    """Threshold on the squared forecast error of a fitted forecaster.

    ``fit(X, y)`` scores the training windows and stores ``threshold_``;
    ``predict`` returns 1 for flagged windows and 0 otherwise.
    """

    def __init__(self, forecaster=None, k=DEFAULT_K):
        self.forecaster = forecaster
        self.k = k

    def _scores(self, X, y):
        return squared_errors(y, self.forecaster.predict(X))

    def fit(self, X, y):
        if self.forecaster is None:
            raise ParameterError("ResidualDetector needs a forecaster")
        if not hasattr(self.forecaster, "network_"):
            self.forecaster.fit(X, y)
        self.train_scores_ = self._scores(X, y)
        self.threshold_ = calibrate_threshold(self.train_scores_, self.k)
        return self

    def score_samples(self, X, y):
        check_is_fitted(self, "threshold_")
        return self._scores(X, y)

    def detect(self, X, y, window_offset=0) -> DetectionResult:
        return apply_threshold(self.score_samples(X, y), self.threshold_, window_offset)

    def predict(self, X, y):
        return self.detect(X, y).flags.astype(int)

    def fit_predict(self, X, y):
        return self.fit(X, y).predict(X, y)


class StatisticalDetector(OutlierMixin, BaseEstimator):
    """Stateless wrapper of :func:`statistical_baseline` for a 1-D series."""

    def __init__(self, filter_order=DEFAULT_FILTER_ORDER, z_threshold=DEFAULT_Z):
        self.filter_order = filter_order
        self.z_threshold = z_threshold

    def fit(self, X, y=None):
        return self

    def predict(self, X):
        return statistical_baseline(np.ravel(X), self.filter_order, self.z_threshold).astype(int)
