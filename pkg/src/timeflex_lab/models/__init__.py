from .base import Forecaster, load_checkpoint, save_checkpoint
from .config import ConfigurationError, ModelConfig
from .layers import (
    InstanceStats,
    RevINSingularityError,
    channel_affine,
    dc_block,
    post_process,
    revin_denormalize,
    revin_normalize,
    series_decompose,
    trend_head,
)
from .linear import DLinear, MeanForecast, NLinear, Persistence, RLinear, mean_forecast, persistence_forecast
from .timeflex import TimeFlex, timeflex_param_count

MODELS = {cls.kind: cls for cls in (TimeFlex, DLinear, NLinear, RLinear, Persistence, MeanForecast)}
TRAINABLE = ("timeflex", "dlinear", "nlinear", "rlinear")


def build_model(kind: str, config: ModelConfig, seed: int = 0) -> Forecaster:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown model {kind!r}; choose from {sorted(MODELS)}") from None
    return cls(config, seed)
