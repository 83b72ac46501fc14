"""Learned mono/FOA to higher-order ambisonic conversion and its baselines."""

from .model import (VARIANTS, SpatializerConfig, ablate, extract_features, forward, front_end, init_params,
                    loss)
from .prior import PriorCoefficients, prior_apply, prior_fit
from .training import TrainConfig, TrainResult, load_model, save_model, train

__all__ = [
    "VARIANTS", "SpatializerConfig", "ablate", "extract_features", "forward", "front_end", "init_params", "loss",
    "PriorCoefficients", "prior_apply", "prior_fit",
    "TrainConfig", "TrainResult", "load_model", "save_model", "train",
]
