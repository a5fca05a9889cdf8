from .tensor import Parameter, Tensor, as_tensor, concat, conv2d
from .layers import (
    Conv2dRect,
    GRUCell,
    Linear,
    Module,
    RNNCell,
    activation,
    glorot_uniform,
    linear_forward,
)
from .optim import Adam
from .gradcheck import finite_diff_check

__all__ = [
    "Adam",
    "Conv2dRect",
    "GRUCell",
    "Linear",
    "Module",
    "Parameter",
    "RNNCell",
    "Tensor",
    "activation",
    "as_tensor",
    "concat",
    "conv2d",
    "finite_diff_check",
    "glorot_uniform",
    "linear_forward",
]
