from .ops import (BatchNormState, add, batchnorm, concat, conv2d,
                  conv_transpose2d, maxpool2, relu, sigmoid)
from .optim import AdamState, adam_step
from .tensor import Tensor, grad_enabled, no_grad

__all__ = [
    "Tensor", "no_grad", "grad_enabled",
    "conv2d", "conv_transpose2d", "maxpool2", "relu", "sigmoid",
    "batchnorm", "BatchNormState", "concat", "add",
    "AdamState", "adam_step",
]
