"""Small dense-array neural engine with hand-derived gradients."""

from .adam import AdamState, adam_init, adam_step, with_lr
from .checkpoint import decode_params, encode_params, load_params, save_params
from .gradcheck import GradCheckReport, grad_check, random_params
from .layers import (
    Activation,
    BatchNorm,
    Conv,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    MaxPool,
    ReLU,
    Reshape,
    Sigmoid,
    Tanh,
    TConv,
)
from .losses import loss_bce
from .network import (
    GradSet,
    Mode,
    NetworkSpec,
    ParamSet,
    Tape,
    backward,
    copy_params,
    forward,
    init_params,
    param_count,
    update_running_stats,
)

__all__ = [
    "Activation", "AdamState", "BatchNorm", "Conv", "Dense", "Flatten", "GradCheckReport", "GradSet",
    "Layer", "LeakyReLU", "MaxPool", "Mode", "NetworkSpec", "ParamSet", "ReLU", "Reshape", "Sigmoid",
    "TConv", "Tanh", "Tape", "adam_init", "adam_step", "backward", "copy_params", "decode_params",
    "encode_params", "forward", "grad_check", "init_params", "load_params", "loss_bce", "param_count",
    "random_params", "save_params", "update_running_stats", "with_lr",
]
