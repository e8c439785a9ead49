"""Differentiable ops. Every op accepts an optional leading batch shape in
front of the documented 2-D contract, so a batch is evaluated in one call."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from src.aptlab.errors import NumericError, ShapeError, shape_error
from src.aptlab.tensor.counter import tally, tally_elementwise
from src.aptlab.tensor.tensor import BackwardFn, Tape, Tensor

_GELU_C = math.sqrt(2.0 / math.pi)


def _emit(name: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    tape = Tape.current()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        assert tape is not None
        tape.record(name, inputs, out, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_finite(op: str, x: np.ndarray) -> None:
    if np.isnan(x).any():
        raise NumericError(f"{op}: NaN in input")


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor, tag: str = "matmul") -> Tensor:
    """c[..., i, j] = sum_t a[..., i, t] * b[..., t, j]; ``b`` is either 2-D
    (shared weight) or carries the same batch shape as ``a``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise shape_error("matmul", a.shape, b.shape)
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise shape_error("matmul", a.shape, b.shape)
    m_rows = int(np.prod(a.shape[:-1]))
    tally(tag, m_rows * a.shape[-1] * b.shape[-1])
    shared = b.ndim == 2
    if shared:
        # one GEMM over every row of the batch instead of one per leading index
        k, n = b.shape
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (n,))
    else:
        out = np.matmul(a.data, b.data)

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        da = db = None
        if shared:
            k, n = b.shape
            g2 = g.reshape(-1, n)
            if needs[0]:
                da = (g2 @ b.data.T).reshape(a.shape)
            if needs[1]:
                db = a.data.reshape(-1, k).T @ g2
        else:
            if needs[0]:
                da = np.matmul(g, np.swapaxes(b.data, -1, -2))
            if needs[1]:
                db = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return da, db

    return _emit("matmul", out, (a, b), _backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a trailing-suffix broadcast of ``a`` (bias)."""
    if b.ndim > a.ndim or (a.shape != b.shape and a.shape[a.ndim - b.ndim:] != b.shape):
        raise shape_error("add", a.shape, b.shape)

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (g if needs[0] else None, _unbroadcast(g, b.shape) if needs[1] else None)

    return _emit("add", a.data + b.data, (a, b), _backward)


def scale(x: Tensor, c: float) -> Tensor:
    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (g * c,)

    return _emit("scale", x.data * c, (x,), _backward)


# -- nonlinearities -----------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        d = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du
        return (g * d,)

    return _emit("gelu", out, (x,), _backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis with per-row max subtraction."""
    _check_finite("softmax_rows", x.data)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax_rows", y, (x,), _backward)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise shape_error("layernorm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        dx = None
        if needs[0]:
            dxhat = g * gamma.data
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        lead = tuple(range(g.ndim - 1))
        dg = (g * xhat).sum(axis=lead) if needs[1] else None
        db = g.sum(axis=lead) if needs[2] else None
        return dx, dg, db

    return _emit("layernorm", out, (x, gamma, beta), _backward)


# -- structural ---------------------------------------------------------------


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the row (token) axis, i.e. axis -2."""
    if not parts:
        raise ShapeError("concat_rows: nothing to concatenate")
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or p.shape[:-2] != ref[:-2] or p.shape[-1] != ref[-1]:
            raise shape_error("concat_rows", ref, p.shape)
    sizes = [p.shape[-2] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return tuple(
            g[..., bounds[i]:bounds[i + 1], :] if needs[i] else None
            for i in range(len(parts))
        )

    return _emit(
        "concat_rows", np.concatenate([p.data for p in parts], axis=-2), tuple(parts), _backward
    )


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    n = x.shape[-2]
    if not 0 <= start < stop <= n:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {n} rows")

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        full = np.zeros_like(x.data)
        full[..., start:stop, :] = g
        return (full,)

    return _emit("slice_rows", x.data[..., start:stop, :].copy(), (x,), _backward)


def take_row(x: Tensor, row: int) -> Tensor:
    """x[..., row, :] with the row axis dropped."""
    if not 0 <= row < x.shape[-2]:
        raise ShapeError(f"take_row: row {row} out of range for {x.shape[-2]} rows")

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        full = np.zeros_like(x.data)
        full[..., row, :] = g
        return (full,)

    return _emit("take_row", x.data[..., row, :].copy(), (x,), _backward)


def add_row(x: Tensor, v: Tensor, row: int = 0, tag: str = "row_add") -> Tensor:
    """Add the d-vector ``v`` to row ``row`` of every matrix in ``x``; all other
    rows pass through bitwise unchanged."""
    if v.shape != (x.shape[-1],):
        raise shape_error("add_row", x.shape, v.shape)
    if not 0 <= row < x.shape[-2]:
        raise ShapeError(f"add_row: row {row} out of range for {x.shape[-2]} rows")
    tally_elementwise(tag, int(np.prod(x.shape[:-2], dtype=np.int64)) * v.shape[0])
    out = x.data.copy()
    out[..., row, :] = out[..., row, :] + v.data

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        dv = g[..., row, :].reshape(-1, v.shape[0]).sum(axis=0) if needs[1] else None
        return (g if needs[0] else None, dv)

    return _emit("add_row", out, (x, v), _backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (g.reshape(src),)

    return _emit("reshape", x.data.reshape(shape), (x,), _backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(int(i) for i in np.argsort(axes))

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (np.transpose(g, inverse),)

    return _emit("transpose", np.ascontiguousarray(np.transpose(x.data, axes)), (x,), _backward)


def broadcast_rows(x: Tensor, batch: tuple[int, ...]) -> Tensor:
    """Repeat ``x`` over a new leading ``batch`` shape."""
    lead = tuple(range(len(batch)))

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        return (g.sum(axis=lead),)

    out = np.broadcast_to(x.data, batch + x.shape).copy()
    return _emit("broadcast_rows", out, (x,), _backward)


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """table[index] along axis 0; gradients scatter-add back."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {table.shape[0]} rows")

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _emit("gather_rows", table.data[idx], (table,), _backward)


# -- losses -------------------------------------------------------------------


def log_softmax_rows(x: Tensor) -> np.ndarray:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    return np.asarray(z - np.log(np.exp(z).sum(axis=-1, keepdims=True)))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of ``logits`` (B x C) against integer ``labels`` (B)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise shape_error("cross_entropy", logits.shape, labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError(f"cross_entropy: label out of range for {logits.shape[1]} classes")
    _check_finite("cross_entropy", logits.data)
    logp = log_softmax_rows(logits)
    rows = np.arange(labels.shape[0])
    loss = -logp[rows, labels].mean()

    def _backward(g: np.ndarray, needs: tuple[bool, ...]) -> tuple[np.ndarray | None, ...]:
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / labels.shape[0]),)

    return _emit("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), _backward)
