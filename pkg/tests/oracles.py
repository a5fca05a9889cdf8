"""Independent reference implementations used to check the real code.

Everything here is written naively (loops, direct formulas) on purpose and
must stay independent of the library paths it verifies.
"""

import math

import numpy as np


def numeric_gradient(fn, array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar-valued fn with respect to `array`."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn()
        flat[i] = orig - eps
        f_minus = fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def naive_conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Quadruple-loop valid cross-correlation."""
    b, cin, h, w = x.shape
    k, _, kh, kw = kernels.shape
    out = np.zeros((b, k, h - kh + 1, w - kw + 1))
    for bi in range(b):
        for ki in range(k):
            for i in range(h - kh + 1):
                for j in range(w - kw + 1):
                    acc = 0.0
                    for c in range(cin):
                        for p in range(kh):
                            for q in range(kw):
                                acc += x[bi, c, i + p, j + q] * kernels[ki, c, p, q]
                    out[bi, ki, i, j] = acc + bias[ki]
    return out


def naive_glimpse(values: np.ndarray, loc, sizes) -> np.ndarray:
    """Per-cell index arithmetic for the glimpse sensor, then mean pooling."""
    frames, bins = values.shape
    lt = min(max(loc[0], -1.0), 1.0)
    lf = min(max(loc[1], -1.0), 1.0)
    ct = int(math.floor((lt + 1.0) / 2.0 * (frames - 1) + 0.5))
    cf = int(math.floor((lf + 1.0) / 2.0 * (bins - 1) + 0.5))
    base = sizes[0]
    patches = np.zeros((len(sizes), base[0], base[1]))
    for k, (st, sf) in enumerate(sizes):
        raw = np.zeros((st, sf))
        t0 = ct - st // 2
        f0 = cf - sf // 2
        for i in range(st):
            for j in range(sf):
                ti, fj = t0 + i, f0 + j
                if 0 <= ti < frames and 0 <= fj < bins:
                    raw[i, j] = values[ti, fj]
        ft, ff = st // base[0], sf // base[1]
        for i in range(base[0]):
            for j in range(base[1]):
                acc = 0.0
                for p in range(ft):
                    for q in range(ff):
                        acc += raw[i * ft + p, j * ff + q]
                patches[k, i, j] = acc / (ft * ff)
    return patches


def bce_direct(pred: np.ndarray, label: np.ndarray, mask: np.ndarray, eps: float = 1e-7) -> float:
    """Direct-formula masked BCE."""
    total = 0.0
    count = 0
    for c in range(len(pred)):
        if not mask[c]:
            continue
        p = min(max(pred[c], eps), 1.0 - eps)
        total += -(label[c] * math.log(p) + (1.0 - label[c]) * math.log(1.0 - p))
        count += 1
    return total / count


def focal_direct(
    pred: np.ndarray,
    label: np.ndarray,
    mask: np.ndarray,
    gamma: float,
    weights: np.ndarray,
    eps: float = 1e-7,
) -> float:
    """Direct-formula masked focal loss."""
    total = 0.0
    count = 0
    for c in range(len(pred)):
        if not mask[c]:
            continue
        p_hat = min(max(pred[c], eps), 1.0 - eps)
        p = p_hat if label[c] >= 0.5 else 1.0 - p_hat
        total += -weights[c] * (1.0 - p) ** gamma * math.log(p)
        count += 1
    return total / count


def adam_scalar(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Simulate Adam on one scalar for a sequence of gradients; returns the
    parameter value after each step."""
    x, m, v = x0, 0.0, 0.0
    history = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
        history.append(x)
    return history


def f1_direct(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom
