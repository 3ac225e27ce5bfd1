"""Minimal reverse-mode differentiation core."""

from nilmkit.engine.tensor import (
    Tensor, TapeNode, backward, constant, make_tensor, no_grad, parameter, tape_order,
)
from nilmkit.engine.functional import (
    activation, add, bias_add, clamp, concat, conv1d, conv_output_length, elementwise,
    hadamard, linear, loss, matmul, mean, one_minus, relu, reshape, scale, sigmoid, stack,
    sub, sum, take, tanh, transpose,
)
from nilmkit.engine.optim import AdamState, adam_step
from nilmkit.engine.gradcheck import CheckReport, grad_check

__all__ = [
    "Tensor", "TapeNode", "backward", "constant", "make_tensor", "no_grad", "parameter",
    "tape_order", "activation", "add", "bias_add", "clamp", "concat", "conv1d",
    "conv_output_length", "elementwise", "hadamard", "linear", "loss", "matmul", "mean",
    "one_minus", "relu", "reshape", "scale", "sigmoid", "stack", "sub", "sum", "take", "tanh",
    "transpose", "AdamState", "adam_step", "CheckReport", "grad_check",
]
