"""Minimal reverse-mode autodiff over dense float64 tensors, plus the layer,
optimizer, and checkpoint machinery the training stack needs."""

from .autodiff import ParamTree, Tensor, backward, concat, detach, slice_cols, zero_grad
from .layers import LayerSpec, forward, init_params, stack_out_width
from .optim import Adam, ema_update
from .checkpoint import load_arrays, save_arrays

__all__ = [
    "Adam",
    "LayerSpec",
    "ParamTree",
    "Tensor",
    "backward",
    "concat",
    "detach",
    "ema_update",
    "forward",
    "init_params",
    "load_arrays",
    "save_arrays",
    "slice_cols",
    "stack_out_width",
    "zero_grad",
]
