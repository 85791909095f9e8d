"""Data-driven innovations Kalman predictor."""

__version__ = "0.1.0"
