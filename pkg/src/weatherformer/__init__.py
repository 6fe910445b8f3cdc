"""Transformer encoder for continuous weather series, with self-supervised
pretraining and downstream crop-yield and influenza forecasting pipelines."""
from .model import ModelConfig, SpatioTemporalContext, WeatherFormer, preset

__version__ = "0.1.0"

__all__ = ["ModelConfig", "SpatioTemporalContext", "WeatherFormer", "preset", "__version__"]
