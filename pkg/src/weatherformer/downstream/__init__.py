"""Downstream tasks: county crop yield and weekly influenza-like illness."""
from . import arima, cropyield, epiweek, flu, training

__all__ = ["arima", "cropyield", "epiweek", "flu", "training"]
