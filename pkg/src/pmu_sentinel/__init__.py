"""Anomaly detection on PMU time series with from-scratch neural forecasters."""

__version__ = "0.1.0"
