"""Prediction-correction tracking of time-varying composite problems with the forward-backward envelope."""

__version__ = "0.1.0"
