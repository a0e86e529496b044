"""Dense tensors with reverse-mode differentiation."""

from . import kernels, ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .engine import (
    EmptySequenceError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    default_precision,
    get_default_dtype,
    grad_enabled,
    no_grad,
)
from .gradcheck import gradient_check, relative_error
from .ops import (
    UnsupportedWidthError,
    concat,
    conv1d_same,
    cross_entropy,
    dropout,
    embedding,
    grad_reverse,
    layer_norm,
    linear,
    masked_softmax,
    matmul,
    max_pool_time,
    relu,
    sigmoid,
    softmax,
    tanh,
)
from .rng import RngStream

__all__ = [
    "CheckpointError", "EmptySequenceError", "NonFiniteError", "Parameter", "RngStream",
    "ShapeError", "Tensor", "UnsupportedWidthError", "as_tensor", "backward", "concat",
    "conv1d_same", "cross_entropy", "default_precision", "dropout", "embedding",
    "get_default_dtype", "grad_enabled", "grad_reverse", "gradient_check", "kernels",
    "layer_norm", "linear", "load_checkpoint", "masked_softmax", "matmul", "max_pool_time",
    "no_grad", "ops", "relative_error", "relu", "save_checkpoint", "sigmoid", "softmax", "tanh",
]
