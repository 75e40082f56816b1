"""Seasonal long-memory forecasting: k-factor GARMA means, G-GARCH and
local-linear wavelet network variances, and a multi-horizon forecast bench."""

__version__ = "0.1.0"
