"""One task of prompt training: cross-entropy over the current task's classes,
Adam on the prompts and the current head block, backbone frozen."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from src.aptlab.data.stream import TaskView
from src.aptlab.errors import ContractError
from src.aptlab.harness.classifier import GrowingClassifier
from src.aptlab.harness.methods import PromptMethod
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.logging.logger import RunLogger
from src.aptlab.tensor import Adam, Tape, cross_entropy
from src.aptlab.vit.model import ViTModel

_log = get_logger("harness.trainer")

_SHUFFLE_KEY = 0x5F1


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 20
    batch_size: int = 32
    lr_prompt: float = 3e-3
    lr_head: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


@dataclass
class TaskTrainResult:
    task: int
    epoch_losses: list[float] = field(default_factory=list)
    first_batch_loss: float = float("nan")
    steps: int = 0
    duration: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def check_frozen(model: ViTModel) -> None:
    if not model.frozen or any(p.requires_grad for p in model.parameters()):
        raise ContractError("backbone must be frozen during prompt training")


def train_task(
    model: ViTModel,
    method: PromptMethod,
    classifier: GrowingClassifier,
    view: TaskView,
    params: TrainParams = TrainParams(),
    seed: int = 0,
    run_logger: RunLogger | None = None,
) -> TaskTrainResult:
    """Train ``method``'s prompts and the newest head block on ``view``.

    Logits are restricted to the task's own columns, so old classes never enter
    the softmax denominator.
    """
    check_frozen(model)
    task = view.task
    if len(view) == 0:
        raise ContractError(f"train_task: task {task} has no training data")
    if task != classifier.n_tasks - 1:
        raise ContractError(f"train_task: classifier was not extended for task {task}")

    result = TaskTrainResult(task)
    start = time.monotonic()
    head_opt = Adam(classifier.current_parameters(), params.lr_head, params.betas, params.eps)
    prompt_params = method.trainable()
    prompt_opt = Adam(prompt_params, params.lr_prompt, params.betas, params.eps) if prompt_params else None
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SHUFFLE_KEY, task)))

    for epoch in range(params.epochs):
        order = rng.permutation(len(view))
        total, seen = 0.0, 0
        for lo in range(0, len(order), params.batch_size):
            images, labels, index = view.read(order[lo:lo + params.batch_size])
            head_opt.zero_grad()
            if prompt_opt is not None:
                prompt_opt.zero_grad()
            with Tape() as tape:
                feats = method.features(model, images, index, "train")
                logits = classifier.task_logits(feats, task)
                loss = cross_entropy(logits, classifier.local_labels(labels, task))
                tape.backward(loss)
            head_opt.step()
            if prompt_opt is not None:
                prompt_opt.step()
            value = loss.item()
            if result.steps == 0:
                result.first_batch_loss = value
            result.steps += 1
            total += value * len(labels)
            seen += len(labels)
        epoch_loss = total / seen
        result.epoch_losses.append(epoch_loss)
        if run_logger is not None:
            run_logger.log_epoch(task, epoch, epoch_loss)
        _log.debug("epoch_done", task=task, epoch=epoch, loss=round(epoch_loss, 6))

    result.duration = time.monotonic() - start
    return result
