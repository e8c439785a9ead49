from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable
from weakref import WeakKeyDictionary

import numpy as np

from src.aptlab.errors import ContractError
from src.aptlab.tensor.tensor import Tensor


@dataclass
class _Moments:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def _update(
    p: Tensor, state: _Moments, lr: float, beta1: float, beta2: float, eps: float
) -> None:
    assert p.grad is not None
    g = p.grad
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * (g * g)
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)


def _check_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        if not p.requires_grad or p.grad is None:
            raise ContractError(f"adam_step: parameter {p.name or p.shape} has no grad")


@dataclass
class Adam:
    """Adam over a fixed parameter list; moment state lives per parameter."""

    params: list[Tensor]
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    _state: dict[int, _Moments] = field(default_factory=dict, repr=False)

    def step(self) -> None:
        _check_grads(self.params)
        for p in self.params:
            st = self._state.get(id(p))
            if st is None:
                st = self._state[id(p)] = _Moments(np.zeros_like(p.data), np.zeros_like(p.data))
            _update(p, st, self.lr, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


_default_state: WeakKeyDictionary[Tensor, _Moments] = WeakKeyDictionary()


def adam_step(
    params: list[Tensor],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Functional Adam: moment state is kept per parameter between calls."""
    _check_grads(params)
    for p in params:
        st = _default_state.get(p)
        if st is None:
            st = _default_state[p] = _Moments(np.zeros_like(p.data), np.zeros_like(p.data))
        _update(p, st, lr, beta1, beta2, eps)
