"""Central finite-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

from src.aptlab.tensor.tensor import Tape, Tensor, backward


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn().item()
        flat[i] = orig - eps
        f_minus = fn().item()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(fn: Callable[[], Tensor], params: list[Tensor], eps: float = 1e-4) -> float:
    """Max relative error between tape gradients and central differences of
    ``fn`` over every entry of every param. ``fn`` must be deterministic."""
    for p in params:
        p.zero_grad()
    with Tape():
        loss = fn()
        backward(loss)
    analytic = [p.grad.copy() for p in params if p.grad is not None]
    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, relative_error(a, numerical_grad(fn, p, eps)))
    return worst
