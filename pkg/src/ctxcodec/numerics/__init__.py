from ._alloc import tune_allocator

tune_allocator()

from . import ops
from .nn import ChannelAttention, Conv2d, Module, Sequential, conv_stack, parameter
from .optim import ParamStore, clip_grad_norm, load_checkpoint, optimizer_step, save_checkpoint
from .tensor import (
    BackwardError,
    Graph,
    NonFiniteError,
    NumericsError,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    debug_checks,
    no_grad,
)

__all__ = [
    "BackwardError",
    "ChannelAttention",
    "Conv2d",
    "Graph",
    "Module",
    "NonFiniteError",
    "NumericsError",
    "ParamStore",
    "Sequential",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "clip_grad_norm",
    "conv_stack",
    "debug_checks",
    "load_checkpoint",
    "no_grad",
    "ops",
    "optimizer_step",
    "parameter",
    "save_checkpoint",
]
