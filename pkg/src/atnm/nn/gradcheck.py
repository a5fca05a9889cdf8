"""Central-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_diff_check(
    fn,
    params,
    eps: float = 1e-5,
    max_coords: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between backprop and central differences.

    `fn` rebuilds the graph on every call and returns a scalar Tensor; it
    must be deterministic (freeze any sampling first). Tensors larger than
    `max_coords` are subsampled, at least 64 coordinates per tensor. The
    relative error denominator is |analytic| + |numeric| + 1e-12.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    max_coords = max(max_coords, 64)
    params = list(params)
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        p.zero_grad()
    out = fn()
    if not isinstance(out, Tensor):
        raise TypeError("fn must return a Tensor")
    out.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = range(n)
        else:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(fn().data)
            flat[i] = orig - eps
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(aflat[i] - numeric) / (abs(aflat[i]) + abs(numeric) + 1e-12)
            worst = max(worst, rel)
    return worst
