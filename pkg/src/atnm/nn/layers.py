"""Parameterized layers: linear, recurrent cells, rectangular convolution.

Weights initialize to uniform(-a, a) with a = sqrt(6/(fan_in+fan_out));
biases start at zero.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DimensionError
from .tensor import Parameter, Tensor, as_tensor, conv2d


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Module:
    """Minimal parameter container.

    Parameters are collected from instance attributes in definition order,
    recursing into child modules and lists of either.
    """

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for value in self.__dict__.values():
            _collect(value, out)
        return out

    def param_dict(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for p in self.parameters():
            if p.name in out:
                raise DimensionError(f"duplicate parameter name '{p.name}'")
            out[p.name] = p
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _collect(value, out: list) -> None:
    if isinstance(value, Parameter):
        out.append(value)
    elif isinstance(value, Module):
        out.extend(value.parameters())
    elif isinstance(value, (list, tuple)):
        for item in value:
            _collect(item, out)


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ weight + bias, flattening any leading batch axes of x."""
    x = as_tensor(x)
    in_features = weight.data.shape[0]
    if x.data.shape[-1] != in_features:
        raise DimensionError(
            f"linear input shape {x.data.shape} incompatible with weight shape {weight.data.shape}"
        )
    lead = x.data.shape[:-1]
    flat = x if x.data.ndim == 2 else x.reshape(-1, in_features)
    out = flat @ weight + bias
    if x.data.ndim == 2:
        return out
    return out.reshape(*lead, weight.data.shape[1])


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, name: str):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            glorot_uniform(rng, in_features, out_features, (in_features, out_features)),
            f"{name}.weight",
        )
        self.bias = Parameter(np.zeros(out_features), f"{name}.bias")

    def forward(self, x: Tensor) -> Tensor:
        return linear_forward(x, self.weight, self.bias)


class GRUCell(Module):
    """Gated recurrent unit; the update gate carries the previous state.

    h' = z * h + (1 - z) * tanh(x Wxc + (r * h) Whc + bc)
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, name: str):
        self.input_size = input_size
        self.hidden_size = hidden_size

        def w_in(tag):
            return Parameter(
                glorot_uniform(rng, input_size, hidden_size, (input_size, hidden_size)),
                f"{name}.{tag}",
            )

        def w_hid(tag):
            return Parameter(
                glorot_uniform(rng, hidden_size, hidden_size, (hidden_size, hidden_size)),
                f"{name}.{tag}",
            )

        self.w_xr, self.w_hr = w_in("w_xr"), w_hid("w_hr")
        self.w_xz, self.w_hz = w_in("w_xz"), w_hid("w_hz")
        self.w_xc, self.w_hc = w_in("w_xc"), w_hid("w_hc")
        self.b_r = Parameter(np.zeros(hidden_size), f"{name}.b_r")
        self.b_z = Parameter(np.zeros(hidden_size), f"{name}.b_z")
        self.b_c = Parameter(np.zeros(hidden_size), f"{name}.b_c")

    def forward(self, h_prev: Tensor, x: Tensor) -> Tensor:
        h_prev = as_tensor(h_prev)
        x = as_tensor(x)
        if h_prev.data.shape[-1] != self.hidden_size:
            raise DimensionError(
                f"hidden state has size {h_prev.data.shape[-1]}, cell expects {self.hidden_size}"
            )
        r = (linear_forward(x, self.w_xr, self.b_r) + h_prev @ self.w_hr).sigmoid()
        z = (linear_forward(x, self.w_xz, self.b_z) + h_prev @ self.w_hz).sigmoid()
        cand = (linear_forward(x, self.w_xc, self.b_c) + (r * h_prev) @ self.w_hc).tanh()
        return z * h_prev + (1.0 - z) * cand


class RNNCell(Module):
    """Plain tanh recurrence: h' = tanh(h Wh + x Wx + b)."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, name: str):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_x = Parameter(
            glorot_uniform(rng, input_size, hidden_size, (input_size, hidden_size)),
            f"{name}.w_x",
        )
        self.w_h = Parameter(
            glorot_uniform(rng, hidden_size, hidden_size, (hidden_size, hidden_size)),
            f"{name}.w_h",
        )
        self.b = Parameter(np.zeros(hidden_size), f"{name}.b")

    def forward(self, h_prev: Tensor, x: Tensor) -> Tensor:
        h_prev = as_tensor(h_prev)
        x = as_tensor(x)
        if h_prev.data.shape[-1] != self.hidden_size:
            raise DimensionError(
                f"hidden state has size {h_prev.data.shape[-1]}, cell expects {self.hidden_size}"
            )
        return (linear_forward(x, self.w_x, self.b) + h_prev @ self.w_h).tanh()


class Conv2dRect(Module):
    """Bank of same-shape (possibly rectangular) kernels, valid padding."""

    def __init__(
        self,
        num_kernels: int,
        kernel_h: int,
        kernel_w: int,
        rng: np.random.Generator,
        name: str,
        in_channels: int = 1,
    ):
        self.kernel_h = kernel_h
        self.kernel_w = kernel_w
        fan_in = in_channels * kernel_h * kernel_w
        fan_out = num_kernels * kernel_h * kernel_w
        self.kernels = Parameter(
            glorot_uniform(rng, fan_in, fan_out, (num_kernels, in_channels, kernel_h, kernel_w)),
            f"{name}.kernels",
        )
        self.bias = Parameter(np.zeros(num_kernels), f"{name}.bias")

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernels, self.bias)


_ACTIVATIONS = {
    "relu": Tensor.relu,
    "sigmoid": Tensor.sigmoid,
    "tanh": Tensor.tanh,
}


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity, kind in {relu, sigmoid, tanh}."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation '{kind}', expected one of {sorted(_ACTIVATIONS)}")
    return fn(as_tensor(x))
