from .core import Param, he_normal, zero_grads
from .layers import (
    Activation,
    BatchNorm,
    Conv2d,
    Dropout,
    Linear,
    MaxPool2x2,
    ResidualBlock,
    relu,
    sigmoid,
)
from .losses import smooth_l1, softmax, softmax_cross_entropy
from .optim import sgd_step
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
from .gradcheck import finite_difference_check, max_rel_error

__all__ = [
    "Param",
    "he_normal",
    "zero_grads",
    "Activation",
    "BatchNorm",
    "Conv2d",
    "Dropout",
    "Linear",
    "MaxPool2x2",
    "ResidualBlock",
    "relu",
    "sigmoid",
    "smooth_l1",
    "softmax",
    "softmax_cross_entropy",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
    "write_checkpoint",
    "read_checkpoint",
    "finite_difference_check",
    "max_rel_error",
]
