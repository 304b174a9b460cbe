"""Adam and global-norm gradient clipping."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .layers import ParamStore


class NumericError(FloatingPointError):
    """Raised when a gradient or loss is not finite."""


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly) scaled gradients and the norm before clipping.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return dict(grads), norm


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray], t: int, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamStore:
    """In-place Adam update with bias correction; moments live on ``store``."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    for name, g in grads.items():
        if name in store.frozen:
            continue
        param = store[name]
        m, v = store.moments.get(name, (np.zeros_like(param.data), np.zeros_like(param.data)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        store.moments[name] = (m, v)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    store.step = t
    return store
