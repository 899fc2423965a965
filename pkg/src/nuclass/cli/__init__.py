from .config import (
    ConfigValidationError,
    ExperimentConfig,
    build_config,
    default_config,
    key_lines,
    load_config,
    parse_config_text,
)
from .main import build_parser, describe_text, main, run_pipeline

__all__ = [
    "ConfigValidationError", "ExperimentConfig", "build_config", "build_parser",
    "default_config", "describe_text", "key_lines", "load_config", "main",
    "parse_config_text", "run_pipeline",
]
