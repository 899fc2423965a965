"""Minimal reverse-mode autodiff over numpy arrays."""
from .ops import (
    ACTIVATIONS,
    ConfigError,
    add,
    concat,
    conv2d,
    conv2d_direct,
    conv_output_size,
    dense,
    dropout,
    global_avg_pool,
    hard_swish,
    matmul,
    mean_all,
    mul,
    relu6,
    reshape,
    scale_channels,
    se_block,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sub,
    sum_all,
    take,
)
from .gradcheck import gradcheck, relative_error
from .optim import AdamState, adam_step
from .tensor import ShapeError, Tape, Tensor, as_tensor, backward, set_debug

__all__ = [
    "ACTIVATIONS", "AdamState", "ConfigError", "ShapeError", "Tape", "Tensor", "adam_step",
    "add", "as_tensor", "backward", "concat", "conv2d", "conv2d_direct", "conv_output_size",
    "dense", "dropout", "global_avg_pool", "gradcheck", "hard_swish", "matmul", "mean_all", "mul", "relu6",
    "relative_error", "reshape", "scale_channels", "se_block", "set_debug", "sigmoid", "softmax",
    "softmax_cross_entropy", "sub", "sum_all", "take",
]
