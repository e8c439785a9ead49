"""Dense tensor with an optional gradient buffer, and the tape that records
differentiable ops for reverse-mode replay."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, ClassVar

import numpy as np

from src.aptlab.errors import ContractError

# Backward rule: (grad_of_output, needs_grad_per_input) -> grad per input (None = skip)
BackwardFn = Callable[[np.ndarray, tuple[bool, ...]], tuple["np.ndarray | None", ...]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape", "__weakref__")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            if not np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float64)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._tape: Tape | None = None

    # -- convenience ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{req}{nm})"

    # operator sugar over the differentiable ops
    def __add__(self, other: Tensor) -> Tensor:
        from src.aptlab.tensor.ops import add
        return add(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        from src.aptlab.tensor.ops import matmul
        return matmul(self, other)

    def __mul__(self, c: float) -> Tensor:
        from src.aptlab.tensor.ops import scale
        return scale(self, c)

    __rmul__ = __mul__


@dataclass
class OpRecord:
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable ops.

    Ops record only while a tape is active (``with Tape() as tape:``) and at
    least one input requires grad; everything else runs untaped.
    """

    _stack: ClassVar[list[Tape]] = []

    def __init__(self) -> None:
        self.records: list[OpRecord] = []

    def __enter__(self) -> Tape:
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        Tape._stack.remove(self)

    @classmethod
    def current(cls) -> Tape | None:
        return cls._stack[-1] if cls._stack else None

    def __len__(self) -> int:
        return len(self.records)

    def record(
        self, name: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn
    ) -> None:
        output._tape = self
        self.records.append(OpRecord(name, inputs, output, backward))

    def backward(self, loss: Tensor) -> int:
        """Replay recorded ops in reverse order. Returns the number of ops whose
        rule actually ran. Clears the tape afterwards."""
        if loss.size != 1:
            raise ContractError(f"backward: loss must be a scalar, got shape {loss.shape}")
        if loss._tape is not self or loss.grad is None:
            raise ContractError("backward: loss was not produced on this tape")
        loss.grad[...] = 1.0
        live = {id(loss)}
        ran = 0
        for rec in reversed(self.records):
            if id(rec.output) not in live:
                continue
            needs = tuple(t.requires_grad for t in rec.inputs)
            grads = rec.backward(rec.output.grad, needs)  # type: ignore[arg-type]
            ran += 1
            for t, g in zip(rec.inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                assert t.grad is not None
                t.grad += g
                live.add(id(t))
        for rec in self.records:
            rec.output._tape = None
        self.records.clear()
        return ran


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires_grad tensor reachable from ``loss``."""
    if loss._tape is None:
        raise ContractError("backward: loss is not attached to an active tape")
    loss._tape.backward(loss)


def zeros(shape: tuple[int, ...], requires_grad: bool = False, dtype: Any = np.float64) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)
