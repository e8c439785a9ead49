"""Task-wise growing linear head: one (d x |Y^t|) block per task."""
from __future__ import annotations

from typing import Any

import numpy as np

from src.aptlab.errors import ContractError, ShapeError
from src.aptlab.tensor import Tensor, add, matmul


class GrowingClassifier:

    def __init__(self, dim: int, dtype: Any = np.float32) -> None:
        self.dim = dim
        self.dtype = np.dtype(dtype)
        self.blocks: list[tuple[Tensor, Tensor]] = []
        self.task_classes: list[list[int]] = []

    @property
    def n_tasks(self) -> int:
        return len(self.blocks)

    @property
    def classes(self) -> list[int]:
        """Global class ids in column order."""
        return [c for group in self.task_classes for c in group]

    @property
    def n_seen(self) -> int:
        return len(self.classes)

    def add_task(self, classes: list[int]) -> None:
        """Freeze every existing block and append a zero block for ``classes``."""
        if not classes:
            raise ContractError("GrowingClassifier: a task needs at least one class")
        if set(classes) & set(self.classes):
            raise ContractError("GrowingClassifier: task classes already have columns")
        for w, b in self.blocks:
            w.requires_grad = b.requires_grad = False
            w.grad = b.grad = None
        t = self.n_tasks
        n = len(classes)
        self.blocks.append((
            Tensor(np.zeros((self.dim, n), dtype=self.dtype), requires_grad=True, name=f"head.{t}.w"),
            Tensor(np.zeros(n, dtype=self.dtype), requires_grad=True, name=f"head.{t}.b"),
        ))
        self.task_classes.append(list(classes))

    def current_parameters(self) -> list[Tensor]:
        if not self.blocks:
            raise ContractError("GrowingClassifier: no task added yet")
        return list(self.blocks[-1])

    def local_labels(self, labels: np.ndarray, task: int) -> np.ndarray:
        """Global class ids -> column positions inside ``task``'s block."""
        lookup = {c: i for i, c in enumerate(self.task_classes[task])}
        try:
            return np.array([lookup[int(y)] for y in labels], dtype=np.int64)
        except KeyError as e:
            raise ContractError(f"label {e} does not belong to task {task}") from None

    def task_logits(self, features: Tensor, task: int) -> Tensor:
        """Logits over ``task``'s classes only; the training-time masked head."""
        if features.shape[-1] != self.dim:
            raise ShapeError(f"task_logits: feature width {features.shape[-1]} != {self.dim}")
        w, b = self.blocks[task]
        return add(matmul(features, w, tag="head"), b)

    def logits(self, features: np.ndarray) -> np.ndarray:
        """All seen-class logits (B, C_seen) in column order, no gradient."""
        if not self.blocks:
            raise ContractError("GrowingClassifier: no task added yet")
        return np.concatenate([features @ w.data + b.data for w, b in self.blocks], axis=-1)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Joint argmax over every seen class; ties go to the lowest class id."""
        order = np.argsort(np.array(self.classes), kind="stable")
        ids = np.array(self.classes)[order]
        return ids[np.argmax(self.logits(features)[:, order], axis=-1)]

    def snapshot(self, upto: int | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        blocks = self.blocks if upto is None else self.blocks[:upto]
        return [(w.data.copy(), b.data.copy()) for w, b in blocks]

    def matches(self, snap: list[tuple[np.ndarray, np.ndarray]]) -> bool:
        return all(
            np.array_equal(w.data, sw) and np.array_equal(b.data, sb)
            for (w, b), (sw, sb) in zip(self.blocks, snap)
        )

    def to_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for t, (w, b) in enumerate(self.blocks):
            out[f"head.{t}.w"] = w.data
            out[f"head.{t}.b"] = b.data
            out[f"head.{t}.classes"] = np.array(self.task_classes[t], dtype=np.float32)
        return out
