from src.aptlab.harness.classifier import GrowingClassifier
from src.aptlab.harness.methods import (
    AdditiveMethod,
    ConcatMethod,
    LinearProbe,
    PoolMethod,
    PromptMethod,
    build_method,
)
from src.aptlab.harness.pretrain import PretrainResult, pretrain_backbone
from src.aptlab.harness.runner import (
    DEFAULT_ALPHAS,
    CilParams,
    CilResult,
    evaluate_task,
    predict,
    run_cil,
    sweep_alpha,
)
from src.aptlab.harness.trainer import TaskTrainResult, TrainParams, train_task

__all__ = [
    "AdditiveMethod", "CilParams", "CilResult", "ConcatMethod", "DEFAULT_ALPHAS",
    "GrowingClassifier", "LinearProbe", "PoolMethod", "PretrainResult", "PromptMethod",
    "TaskTrainResult", "TrainParams", "build_method", "evaluate_task", "predict",
    "pretrain_backbone", "run_cil", "sweep_alpha", "train_task",
]
