"""Minimal dense-tensor engine: layer math, SGD, and gradient checking."""

from .tensor import Tensor, ParameterSet, ShapeError, GradientError
from .ops import (
    conv2d,
    conv2d_backward,
    maxpool2d,
    maxpool2d_backward,
    batchnorm2d,
    batchnorm2d_backward,
    dense,
    dense_backward,
    relu,
    relu_backward,
    dropout,
    dropout_mask,
    dropout_backward,
    softmax_cross_entropy,
)
from .optim import sgd_step
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "ParameterSet",
    "ShapeError",
    "GradientError",
    "dropout_mask",
    "conv2d",
    "conv2d_backward",
    "maxpool2d",
    "maxpool2d_backward",
    "batchnorm2d",
    "batchnorm2d_backward",
    "dense",
    "dense_backward",
    "relu",
    "relu_backward",
    "dropout",
    "dropout_backward",
    "softmax_cross_entropy",
    "sgd_step",
    "grad_check",
]
