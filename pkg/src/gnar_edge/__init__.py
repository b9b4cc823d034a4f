"""GNAR-edge network autoregression for edge time series."""

__version__ = "0.1.0"
