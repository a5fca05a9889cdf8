"""Reverse-mode automatic differentiation over numpy arrays.

All values are float64. Ops build the graph eagerly; ``Tensor.backward()``
walks it once in reverse topological order. Only the operations the models
actually need are implemented.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _spread(grad: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    """Expand a reduced gradient back to `shape`."""
    if axis is None:
        return np.broadcast_to(grad, shape)
    if not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tensor:
    """A node in the computation graph: an ndarray plus backward plumbing."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    # Make ndarray <op> Tensor defer to the reflected Tensor operators
    # instead of numpy broadcasting over the graph node.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._grad_fn = None

    # -- graph plumbing ----------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() needs a scalar output, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)

        def grad_fn(g, a=self, b=other):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g)

        return _from_op(self.data + other.data, (self, other), grad_fn)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)

        def grad_fn(g, a=self, b=other):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, -g)

        return _from_op(self.data - other.data, (self, other), grad_fn)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other).__sub__(self)

    def __neg__(self) -> "Tensor":
        def grad_fn(g, a=self):
            _accumulate(a, -g)

        return _from_op(-self.data, (self,), grad_fn)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)

        def grad_fn(g, a=self, b=other):
            if a.requires_grad:
                _accumulate(a, g * b.data)
            if b.requires_grad:
                _accumulate(b, g * a.data)

        return _from_op(self.data * other.data, (self, other), grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)

        def grad_fn(g, a=self, b=other):
            if a.requires_grad:
                _accumulate(a, g / b.data)
            if b.requires_grad:
                _accumulate(b, -g * a.data / (b.data * b.data))

        return _from_op(self.data / other.data, (self, other), grad_fn)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other).__truediv__(self)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise DimensionError(
                f"matmul needs 2-D operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise DimensionError(
                f"matmul inner dimensions disagree: {self.data.shape} @ {other.data.shape}"
            )

        def grad_fn(g, a=self, b=other):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

        return _from_op(self.data @ other.data, (self, other), grad_fn)

    def pow(self, exponent: float) -> "Tensor":
        e = float(exponent)

        def grad_fn(g, a=self, e=e):
            _accumulate(a, g * e * a.data ** (e - 1.0))

        return _from_op(self.data**e, (self,), grad_fn)

    # -- elementwise functions ----------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def grad_fn(g, a=self, o=out_data):
            _accumulate(a, g * o)

        return _from_op(out_data, (self,), grad_fn)

    def log(self) -> "Tensor":
        def grad_fn(g, a=self):
            _accumulate(a, g / a.data)

        return _from_op(np.log(self.data), (self,), grad_fn)

    def relu(self) -> "Tensor":
        def grad_fn(g, a=self):
            _accumulate(a, g * (a.data > 0.0))

        return _from_op(np.maximum(self.data, 0.0), (self,), grad_fn)

    def sigmoid(self) -> "Tensor":
        out_data = _stable_sigmoid(self.data)

        def grad_fn(g, a=self, o=out_data):
            _accumulate(a, g * o * (1.0 - o))

        return _from_op(out_data, (self,), grad_fn)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)

        def grad_fn(g, a=self, o=out_data):
            _accumulate(a, g * (1.0 - o * o))

        return _from_op(out_data, (self,), grad_fn)

    def clip(self, lo: float, hi: float) -> "Tensor":
        # Gradient passes only where the value was strictly inside the range.
        def grad_fn(g, a=self, lo=lo, hi=hi):
            _accumulate(a, g * ((a.data > lo) & (a.data < hi)))

        return _from_op(np.clip(self.data, lo, hi), (self,), grad_fn)

    # -- reductions and shape ops --------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        def grad_fn(g, a=self, axis=axis, keepdims=keepdims):
            _accumulate(a, _spread(g, a.data.shape, axis, keepdims))

        return _from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.mean(axis=axis, keepdims=keepdims)
        count = self.data.size / out_data.size

        def grad_fn(g, a=self, axis=axis, keepdims=keepdims, count=count):
            _accumulate(a, _spread(g, a.data.shape, axis, keepdims) / count)

        return _from_op(out_data, (self,), grad_fn)

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.max(axis=axis, keepdims=keepdims)

        def grad_fn(g, a=self, axis=axis, keepdims=keepdims, o=out_data):
            if axis is None:
                mask = a.data == o
                _accumulate(a, np.broadcast_to(g, a.data.shape) * mask / mask.sum())
            else:
                ok = o if keepdims else np.expand_dims(o, axis)
                gk = g if keepdims else np.expand_dims(g, axis)
                mask = a.data == ok
                counts = mask.sum(axis=axis, keepdims=True)
                _accumulate(a, mask * gk / counts)

        return _from_op(out_data, (self,), grad_fn)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def grad_fn(g, a=self):
            _accumulate(a, g.reshape(a.data.shape))

        return _from_op(self.data.reshape(shape), (self,), grad_fn)

    def __getitem__(self, idx) -> "Tensor":
        # Basic (slice/int/tuple) indexing only; no repeated positions.
        def grad_fn(g, a=self, idx=idx):
            full = np.zeros_like(a.data)
            full[idx] += g
            _accumulate(a, full)

        return _from_op(self.data[idx].copy(), (self,), grad_fn)


class Parameter(Tensor):
    """Trainable tensor with a unique name and a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data: np.ndarray, parents: tuple, grad_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            if t.requires_grad:
                _accumulate(t, piece)

    return _from_op(data, tuple(tensors), grad_fn)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid-padding stride-1 cross-correlation.

    `x` is (batch, in_channels, H, W), `kernels` is (K, in_channels, kh, kw),
    `bias` is (K,). Rectangular kernels (kh != kw) are the intended use.
    """
    x = as_tensor(x)
    kernels = as_tensor(kernels)
    bias = as_tensor(bias)
    if x.data.ndim != 4 or kernels.data.ndim != 4:
        raise DimensionError(
            f"conv2d needs 4-D input and kernels, got {x.data.shape} and {kernels.data.shape}"
        )
    _, cin, h, w = x.data.shape
    k, kcin, kh, kw = kernels.data.shape
    if kcin != cin:
        raise DimensionError(
            f"conv2d channel mismatch: input {x.data.shape} vs kernels {kernels.data.shape}"
        )
    if kh > h or kw > w:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than input {h}x{w}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    out_data = np.einsum("bchwuv,kcuv->bkhw", windows, kernels.data, optimize=True)
    out_data = out_data + bias.data[None, :, None, None]
    out_h, out_w = out_data.shape[2], out_data.shape[3]

    def grad_fn(g):
        if kernels.requires_grad:
            _accumulate(kernels, np.einsum("bchwuv,bkhw->kcuv", windows, g, optimize=True))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for p in range(kh):
                for q in range(kw):
                    dx[:, :, p : p + out_h, q : q + out_w] += np.einsum(
                        "bkhw,kc->bchw", g, kernels.data[:, :, p, q]
                    )
            _accumulate(x, dx)

    return _from_op(out_data, (x, kernels, bias), grad_fn)
