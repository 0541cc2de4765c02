"""Quadcopter simulator, trained-policy tools and tracking metrics."""

from ._core import (
    ConfigError,
    EnvConfig,
    Mlp,
    QuadEnv,
    QuadParams,
    RewardParams,
    SimulationDivergence,
    WeightsFormatError,
    check_config,
    circle_trajectory,
    decode_weights,
    default_config_text,
    encode_weights,
    generate_inference_source,
    load_weights,
    random_actor,
    reward,
    rmse,
    save_weights,
)

__all__ = [name for name in dir() if not name.startswith("_")]
