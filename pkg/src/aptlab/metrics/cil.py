"""Class-incremental metrics over the lower-triangular accuracy matrix R, where
R[t, i] is the accuracy on task i's test set after training task t.

Task indices in the public API are 1-based, like the formulas:
A = mean_i R[T, i];  F = mean_{i<T} (R[i, i] - R[T, i]).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.aptlab.errors import ContractError


@dataclass
class EvalMatrix:
    R: np.ndarray  # (N, N), NaN where undefined

    @classmethod
    def empty(cls, n_tasks: int) -> EvalMatrix:
        return cls(np.full((n_tasks, n_tasks), np.nan))

    @classmethod
    def from_rows(cls, rows: list[list[float]]) -> EvalMatrix:
        m = cls.empty(len(rows))
        for t, row in enumerate(rows, start=1):
            for i, acc in enumerate(row, start=1):
                m.set(t, i, acc)
        return m

    @property
    def n_tasks(self) -> int:
        return int(self.R.shape[0])

    def set(self, t: int, i: int, acc: float) -> None:
        if not 1 <= i <= t <= self.n_tasks:
            raise ContractError(f"EvalMatrix: entry ({t}, {i}) is outside the lower triangle")
        if not 0.0 <= acc <= 1.0:
            raise ContractError(f"EvalMatrix: accuracy {acc} outside [0, 1]")
        self.R[t - 1, i - 1] = acc

    def get(self, t: int, i: int) -> float:
        v = float(self.R[t - 1, i - 1])
        if np.isnan(v):
            raise ContractError(f"EvalMatrix: entry ({t}, {i}) is not populated")
        return v

    def row(self, t: int) -> list[float]:
        return [self.get(t, i) for i in range(1, t + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["after_task"] + [f"task_{i}" for i in range(1, self.n_tasks + 1)])
        for t in range(1, self.n_tasks + 1):
            cells = []
            for i in range(1, self.n_tasks + 1):
                v = self.R[t - 1, i - 1]
                cells.append("" if i > t or np.isnan(v) else f"{v:.6f}")
            w.writerow([t] + cells)
        return buf.getvalue()

    def write_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path: Path | str) -> EvalMatrix:
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))[1:]
        m = cls.empty(len(rows))
        for t, row in enumerate(rows, start=1):
            for i, cell in enumerate(row[1:], start=1):
                if cell:
                    m.set(t, i, float(cell))
        return m


def _last(R: EvalMatrix, T: int | None) -> int:
    T = R.n_tasks if T is None else T
    if not 1 <= T <= R.n_tasks:
        raise ContractError(f"task count {T} outside [1, {R.n_tasks}]")
    return T


def avg_accuracy(R: EvalMatrix, T: int | None = None) -> float:
    """Mean of row T (default: the last row)."""
    T = _last(R, T)
    return float(np.mean(R.row(T)))


def forgetting(R: EvalMatrix, T: int | None = None) -> float:
    """Mean drop from just-trained accuracy to accuracy after task T; 0 for T = 1."""
    T = _last(R, T)
    if T == 1:
        R.get(1, 1)
        return 0.0
    drops = [R.get(i, i) - R.get(T, i) for i in range(1, T)]
    return float(np.mean(drops))
