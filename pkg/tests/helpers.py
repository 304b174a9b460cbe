"""Finite-difference gradient checking shared by the test modules."""

from __future__ import annotations

from typing import Callable

import numpy as np

STEP = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f`` with respect to ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        up = f()
        arr[idx] = orig - h
        down = f()
        arr[idx] = orig
        out[idx] = (up - down) / (2 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_tensors(loss: Callable, tensors: dict, h: float = STEP) -> dict[str, float]:
    """Backprop ``loss()`` once, then compare every tensor's grad with finite differences."""
    for t in tensors.values():
        t.grad = None
    loss().backward()
    errors = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(lambda: loss().item(), t.data, h)
        errors[name] = relative_error(analytic, numeric)
    return errors
