from .config import ModelConfig, StageSpec, desk_config, full_config
from .network import (
    SiameseNet,
    build_model,
    count_parameters,
    forward,
    inverted_residual,
    parameter_layout,
)

__all__ = [
    "ModelConfig", "SiameseNet", "StageSpec", "build_model", "count_parameters", "desk_config",
    "forward", "inverted_residual", "full_config", "parameter_layout",
]
