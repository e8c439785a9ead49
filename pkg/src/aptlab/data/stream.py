"""Class-incremental task stream and an access-auditing view of task data."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from src.aptlab.data.synth import Dataset
from src.aptlab.errors import ConfigError, ContractError

_STREAM_KEY = 0x57
_HOLDOUT_KEY = 0x58
# share of each class held out for testing when no separate test set is given
HOLDOUT_FRACTION = 1 / 3


@dataclass
class TaskStream:
    class_groups: list[list[int]]      # global class ids, one group per task
    train: Dataset
    test: Dataset
    train_indices: list[np.ndarray]
    test_indices: list[np.ndarray]
    seed: int = 0

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for group in self.class_groups:
            if seen & set(group):
                raise ConfigError("TaskStream: class sets of different tasks overlap")
            seen |= set(group)
        if self.train is self.test:
            for tr, te in zip(self.train_indices, self.test_indices):
                if set(tr.tolist()) & set(te.tolist()):
                    raise ConfigError("TaskStream: a test sample appears in a train split")

    @property
    def n_tasks(self) -> int:
        return len(self.class_groups)

    def classes_up_to(self, task: int) -> list[int]:
        return [c for g in self.class_groups[: task + 1] for c in g]


def _holdout(ds: Dataset, groups: list[list[int]], seed: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per class, a seeded ``HOLDOUT_FRACTION`` of the samples becomes test data."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_HOLDOUT_KEY,)))
    train_idx, test_idx = [], []
    for group in groups:
        tr, te = [], []
        for c in group:
            idx = np.flatnonzero(ds.labels == c)
            if idx.size < 2:
                raise ConfigError(f"split_stream: class {c} has {idx.size} samples, cannot hold out a test share")
            idx = rng.permutation(idx)
            n_test = max(1, int(idx.size * HOLDOUT_FRACTION))
            te.append(idx[:n_test])
            tr.append(idx[n_test:])
        train_idx.append(np.sort(np.concatenate(tr)))
        test_idx.append(np.sort(np.concatenate(te)))
    return train_idx, test_idx


def split_stream(ds: Dataset, n_tasks: int, seed: int, test: Dataset | None = None) -> TaskStream:
    """Shuffle the classes of ``ds`` with ``seed`` and cut them into ``n_tasks``
    equal contiguous groups. Without a separate ``test`` set, each class's
    samples are divided into disjoint train and test shares."""
    classes = ds.classes
    if n_tasks < 1 or len(classes) % n_tasks:
        raise ConfigError(f"split_stream: {len(classes)} classes cannot be split into {n_tasks} tasks")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM_KEY,)))
    order = [int(c) for c in rng.permutation(classes)]
    size = len(classes) // n_tasks
    groups = [order[i * size:(i + 1) * size] for i in range(n_tasks)]
    if test is None:
        train_idx, test_idx = _holdout(ds, groups, seed)
        return TaskStream(groups, ds, ds, train_idx, test_idx, seed)
    train_idx = [np.flatnonzero(np.isin(ds.labels, g)) for g in groups]
    test_idx = [np.flatnonzero(np.isin(test.labels, g)) for g in groups]
    return TaskStream(groups, ds, test, train_idx, test_idx, seed)


@dataclass
class AccessAudit:
    """Which dataset indices were read while each task was training."""

    reads: dict[int, set[int]] = field(default_factory=lambda: defaultdict(set))

    def verify(self, stream: TaskStream) -> None:
        for task, idx in self.reads.items():
            allowed = set(stream.train_indices[task].tolist())
            leaked = idx - allowed
            if leaked:
                raise ContractError(
                    f"rehearsal check: task {task} read {len(leaked)} samples outside its own data"
                )


class TaskView:
    """Read-only window onto one task's split; every read is recorded."""

    def __init__(
        self, ds: Dataset, indices: np.ndarray, task: int, audit: AccessAudit | None = None
    ) -> None:
        self.ds = ds
        self.indices = np.asarray(indices, dtype=np.int64)
        self.task = task
        self.audit = audit

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def batch(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        images, labels, _ = self.read(positions)
        return images, labels

    def read(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Images, labels and the dataset indices they came from."""
        idx = self.indices[np.asarray(positions, dtype=np.int64)]
        if self.audit is not None:
            self.audit.reads[self.task].update(idx.tolist())
        return self.ds.images[idx], self.ds.labels[idx], idx
