"""Global LSTM forecasting with leading-indicator covariates."""

__version__ = "0.1.0"
