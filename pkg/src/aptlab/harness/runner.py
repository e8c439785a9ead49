"""The class-incremental loop: extend head, train, finalise prompts, evaluate
every task seen so far without task identity."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from src.aptlab.data.stream import AccessAudit, TaskStream, TaskView
from src.aptlab.errors import ContractError
from src.aptlab.harness import artifacts
from src.aptlab.harness.classifier import GrowingClassifier
from src.aptlab.harness.methods import PromptMethod, build_method
from src.aptlab.harness.trainer import TaskTrainResult, TrainParams, check_frozen, train_task
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.logging.logger import RunLogger
from src.aptlab.metrics.cil import EvalMatrix, avg_accuracy, forgetting
from src.aptlab.metrics.flops import FlopsReport, ParamReport, count_trainable_params, flops_forward
from src.aptlab.prompts import WarmStart
from src.aptlab.vit.model import ViTModel

_log = get_logger("harness.runner")

DEFAULT_ALPHAS = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class CilParams:
    train: TrainParams = TrainParams()
    alpha: float = 0.7
    warm_start: WarmStart = WarmStart.FUSED
    vpt_n: int = 4
    pool_size: int = 10
    pool_n: int = 10
    pool_top_k: int = 1
    eval_batch: int = 256


@dataclass
class CilResult:
    method: str
    seed: int
    alpha: float
    matrix: EvalMatrix
    flops: FlopsReport
    params: ParamReport
    tasks: list[TaskTrainResult] = field(default_factory=list)
    audit: AccessAudit = field(default_factory=AccessAudit)

    @property
    def avg_acc(self) -> float:
        return avg_accuracy(self.matrix)

    @property
    def forgetting(self) -> float:
        return forgetting(self.matrix)

    def summary(self, config_echo: dict[str, Any] | None = None) -> dict[str, Any]:
        return {
            "method": self.method,
            "seed": self.seed,
            "alpha": self.alpha,
            "n_tasks": self.matrix.n_tasks,
            "avg_acc": self.avg_acc,
            "forgetting": self.forgetting,
            "gmacs": self.flops.gmacs,
            "flops_ratio": self.flops.ratio,
            "trainable_prompt_params": self.params.prompt_params,
            "eval_rows": [self.matrix.row(t) for t in range(1, self.matrix.n_tasks + 1)],
            "config": config_echo or {},
        }


def predict(
    model: ViTModel, method: PromptMethod, classifier: GrowingClassifier,
    images: np.ndarray, index: np.ndarray | None = None,
) -> np.ndarray:
    """Global class id per image: argmax over all seen classes, no task id."""
    feats = method.inference_features(model, images, index, "test")
    return classifier.predict(feats)


def evaluate_task(
    model: ViTModel, method: PromptMethod, classifier: GrowingClassifier,
    stream: TaskStream, task: int, batch_size: int = 256,
) -> float:
    idx = stream.test_indices[task]
    if idx.size == 0:
        raise ContractError(f"evaluate_task: task {task} has no test samples")
    hits = 0
    for lo in range(0, idx.size, batch_size):
        chunk = idx[lo:lo + batch_size]
        pred = predict(model, method, classifier, stream.test.images[chunk], chunk)
        hits += int((pred == stream.test.labels[chunk]).sum())
    return hits / idx.size


def run_cil(
    model: ViTModel,
    stream: TaskStream,
    method: str,
    params: CilParams = CilParams(),
    seed: int = 0,
    out_dir: Path | str | None = None,
    config_echo: dict[str, Any] | None = None,
) -> CilResult:
    check_frozen(model)
    strategy = build_method(
        method, model, seed, alpha=params.alpha, warm_start=params.warm_start,
        vpt_n=params.vpt_n, pool_size=params.pool_size, pool_n=params.pool_n,
        pool_top_k=params.pool_top_k,
    )
    spec = strategy.cost_spec()
    result = CilResult(
        method=method, seed=seed, alpha=params.alpha,
        matrix=EvalMatrix.empty(stream.n_tasks),
        flops=flops_forward(model.config, spec),
        params=count_trainable_params(spec, model.config, params.pool_size),
    )
    run_logger = RunLogger(out_dir) if out_dir is not None else None
    backbone = model.snapshot()
    classifier = GrowingClassifier(model.config.dim, model.dtype)
    _log.info("cil_start", method=method, tasks=stream.n_tasks, seed=seed, alpha=params.alpha)

    for t in range(stream.n_tasks):
        classifier.add_task(stream.class_groups[t])
        old_head = classifier.snapshot(upto=t)
        strategy.begin_task(t)
        view = TaskView(stream.train, stream.train_indices[t], t, result.audit)
        if run_logger is not None:
            run_logger.log_task_start(t, stream.class_groups[t], len(view))
        started = time.monotonic()
        trained = train_task(model, strategy, classifier, view, params.train, seed, run_logger)
        strategy.end_task(t)
        result.tasks.append(trained)
        if not classifier.matches(old_head):
            raise ContractError(f"head columns of earlier tasks changed while training task {t}")

        row = [evaluate_task(model, strategy, classifier, stream, i, params.eval_batch)
               for i in range(t + 1)]
        for i, acc in enumerate(row, start=1):
            result.matrix.set(t + 1, i, acc)
        if out_dir is not None:
            artifacts.write_prompt_snapshot(out_dir, t + 1, strategy.snapshot_arrays())
        if run_logger is not None:
            run_logger.log_eval(t, row)
            run_logger.log_task_end(t, trained.final_loss)
        _log.info("task_done", method=method, task=t + 1, loss=round(trained.final_loss, 4),
                  avg_acc=round(float(np.mean(row)), 4),
                  seconds=round(time.monotonic() - started, 2))

    if not model.matches_snapshot(backbone):
        raise ContractError("backbone weights changed during the CIL run")
    result.audit.verify(stream)

    if out_dir is not None:
        artifacts.write_eval_matrix(out_dir, result.matrix)
        artifacts.write_summary(out_dir, result.summary(config_echo))
    _log.info("cil_done", method=method, avg_acc=round(result.avg_acc, 4),
              forgetting=round(result.forgetting, 4))
    return result


def sweep_alpha(
    model: ViTModel,
    stream: TaskStream,
    alphas: Iterable[float] = DEFAULT_ALPHAS,
    params: CilParams = CilParams(),
    seed: int = 0,
    out_dir: Path | str | None = None,
) -> list[dict[str, float]]:
    """Fusion-weight sensitivity of apt: one full run per alpha."""
    rows = []
    for alpha in alphas:
        sub = Path(out_dir) / f"alpha_{alpha:.2f}" if out_dir is not None else None
        res = run_cil(model, stream, "apt", replace(params, alpha=alpha), seed, sub)
        rows.append({"alpha": float(alpha), "avg_acc": res.avg_acc, "forgetting": res.forgetting})
    return rows
