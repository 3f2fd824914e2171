"""Activation, aggregation and loss functions on numpy arrays."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError

ACTIVATION_CODES = {"identity": 0, "sigmoid": 1, "tanh": 2, "relu": 3}
AGGREGATION_CODES = {"avg": 0, "max": 1, "sum": 2}

BCE_CLAMP = 1e-12


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(name: str, z):
    z = np.asarray(z, dtype=np.float64)
    if name == "identity":
        return z.copy()
    if name == "sigmoid":
        return sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ConfigError(f"unknown activation {name!r}")


def activate_codes(codes: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Element-wise activation with a per-element function code."""
    y = z.copy()
    m = codes == 1
    if m.any():
        y[m] = sigmoid(z[m])
    m = codes == 2
    if m.any():
        y[m] = np.tanh(z[m])
    m = codes == 3
    if m.any():
        y[m] = np.maximum(z[m], 0.0)
    return y


def activation_grad(name: str, z, y):
    """d act / d z given pre-activation z and output y."""
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "tanh":
        return 1.0 - y * y
    if name == "relu":
        return (np.asarray(z) > 0).astype(np.float64)
    raise ConfigError(f"unknown activation {name!r}")


def aggregate(name: str, values) -> np.ndarray:
    """Per-dimension aggregation over a list of equally shaped vectors."""
    stack = np.vstack([np.asarray(v, dtype=np.float64) for v in values])
    if name == "avg":
        return stack.mean(axis=0)
    if name == "sum":
        return stack.sum(axis=0)
    if name == "max":
        return stack.max(axis=0)
    raise ConfigError(f"unknown aggregation {name!r}")


def loss(prediction, target, kind: str) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to ``prediction``."""
    p = np.atleast_1d(np.asarray(prediction, dtype=np.float64))
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        if t.size == 1:
            t = np.full_like(p, t.item())
        else:
            raise ConfigError(f"prediction shape {p.shape} does not match target shape {t.shape}")
    if kind == "bce":
        if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
            raise DomainError(f"binary cross-entropy needs predictions in [0, 1], got {p.tolist()}")
        pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
        value = float(-np.sum(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)))
        grad = -t / pc + (1.0 - t) / (1.0 - pc)
        return value, grad
    if kind == "mse":
        diff = p - t
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size
    raise ConfigError(f"unknown loss {kind!r}")
