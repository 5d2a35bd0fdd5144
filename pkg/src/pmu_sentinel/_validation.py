"""Small input-checking helpers used across modules."""

import numbers

import numpy as np

from .exceptions import ParameterError, ShapeError


def as_series(values, name="series", allow_empty=False):
    """Return ``values`` as a contiguous 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ParameterError(f"{name} must not be empty")
    return np.ascontiguousarray(arr)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_odd_order(order, length=None):
    order = check_int(order, "order", minimum=1)
    if order % 2 == 0:
        raise ParameterError(f"filter order must be odd, got {order}")
    if length is not None and order > length:
        raise ParameterError(f"filter order {order} exceeds series length {length}")
    return order


def check_fraction(value, name, low=0.0, high=1.0, closed_low=False, closed_high=False):
    value = float(value)
    ok_low = value >= low if closed_low else value > low
    ok_high = value <= high if closed_high else value < high
    if not (ok_low and ok_high and np.isfinite(value)):
        lb = "[" if closed_low else "("
        rb = "]" if closed_high else ")"
        raise ParameterError(f"{name} must lie in {lb}{low}, {high}{rb}, got {value}")
    return value


def check_same_shape(a, b, what="arrays"):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")
