"""Supervised pretraining of the toy backbone on a class universe disjoint
from the CIL stream. The pretraining head is thrown away afterwards."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.aptlab.data.synth import Dataset
from src.aptlab.errors import ConfigError
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.tensor import Adam, Tape, Tensor, add, cross_entropy, matmul
from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.model import ViTModel

_log = get_logger("harness.pretrain")

_PRETRAIN_KEY = 0x9E7


@dataclass
class PretrainResult:
    model: ViTModel
    train_accuracy: float
    test_accuracy: float
    epoch_losses: list[float]


def _accuracy(model: ViTModel, w: Tensor, b: Tensor, ds: Dataset, classes: np.ndarray,
              batch_size: int) -> float:
    if len(ds) == 0:
        return 0.0
    hits = 0
    for lo in range(0, len(ds), batch_size):
        feats = model.forward_cls(ds.images[lo:lo + batch_size]).data
        pred = classes[np.argmax(feats @ w.data + b.data, axis=-1)]
        hits += int((pred == ds.labels[lo:lo + batch_size]).sum())
    return hits / len(ds)


def pretrain_backbone(
    config: ViTConfig,
    train: Dataset,
    test: Dataset | None = None,
    epochs: int = 15,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 32,
    cil_classes: Iterable[int] = (),
) -> PretrainResult:
    overlap = set(train.classes) & set(int(c) for c in cil_classes)
    if overlap:
        raise ConfigError(
            f"pretraining classes overlap the CIL stream ({len(overlap)} shared, e.g. {min(overlap)})"
        )
    if len(train) == 0:
        raise ConfigError("pretrain_backbone: empty pretraining set")

    model = ViTModel.init(config, seed=seed)
    model.set_trainable(True)
    classes = np.array(train.classes)
    local = np.searchsorted(classes, train.labels)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_PRETRAIN_KEY,)))
    w = Tensor(np.zeros((config.dim, len(classes)), dtype=model.dtype), requires_grad=True, name="pretrain.w")
    b = Tensor(np.zeros(len(classes), dtype=model.dtype), requires_grad=True, name="pretrain.b")
    opt = Adam(model.parameters() + [w, b], lr=lr)

    losses: list[float] = []
    start = time.monotonic()
    for epoch in range(epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            opt.zero_grad()
            with Tape() as tape:
                logits = add(matmul(model.forward_cls(train.images[idx]), w, tag="head"), b)
                loss = cross_entropy(logits, local[idx])
                tape.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / len(train))
        _log.info("pretrain_epoch", epoch=epoch, loss=round(losses[-1], 6),
                  elapsed=round(time.monotonic() - start, 1))

    model.freeze()
    train_acc = _accuracy(model, w, b, train, classes, 256)
    test_acc = _accuracy(model, w, b, test, classes, 256) if test is not None else train_acc
    _log.info("pretrain_done", train_accuracy=round(train_acc, 4), test_accuracy=round(test_acc, 4))
    return PretrainResult(model, train_acc, test_acc, losses)
