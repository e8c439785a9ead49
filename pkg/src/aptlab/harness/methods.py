"""Prompting strategies the CIL loop can drive.

A strategy owns its prompt state across tasks: it says which tensors train on
the current task, produces the CLS feature for a batch, and decides what the
inference-time prompts are once a task ends.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ContractError
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.metrics.flops import MethodSpec, method_spec_for
from src.aptlab.prompts import (
    ConcatPromptSet,
    PromptPool,
    PromptSet,
    WarmStart,
    init_prompts,
    pool_forward,
    ppf_fuse,
    tag_mode,
    vpt_concat_forward,
)
from src.aptlab.tensor import Tensor
from src.aptlab.vit.model import ViTModel

_log = get_logger("harness.methods")


class PromptMethod(ABC):
    name: str = ""

    @abstractmethod
    def begin_task(self, task: int) -> None: ...

    @abstractmethod
    def trainable(self) -> list[Tensor]: ...

    @abstractmethod
    def features(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None = None,
                 split: str = "train") -> Tensor:
        """Training-time CLS features (B, d), taped when prompts train."""

    def end_task(self, task: int) -> None:
        return None

    def inference_features(self, model: ViTModel, images: np.ndarray,
                           index: np.ndarray | None = None, split: str = "test") -> np.ndarray:
        return self.features(model, images, index, split).data

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def cost_spec(self) -> MethodSpec:
        return method_spec_for(self.name)


class AdditiveMethod(PromptMethod):
    """APT and its two ablations (no fusion; input-level insertion)."""

    def __init__(
        self, model: ViTModel, name: str = "apt", alpha: float = 0.7,
        fuse: bool = True, mode: str = "kv", warm_start: WarmStart = WarmStart.FUSED,
    ) -> None:
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
        self.name = name
        self.config = model.config
        self.dtype = model.dtype
        self.alpha = alpha
        self.fuse = fuse
        self.mode = mode
        self.warm_start = WarmStart(warm_start)
        self.training: PromptSet | None = None
        self.inference: PromptSet | None = None

    def begin_task(self, task: int) -> None:
        if task == 0 or self.warm_start is WarmStart.FRESH:
            self.training = init_prompts(self.config, self.dtype)
        elif self.warm_start is WarmStart.FUSED:
            assert self.inference is not None
            self.training = self.inference.copy(trainable=True)
        else:
            assert self.training is not None
            self.training = self.training.copy(trainable=True)

    def trainable(self) -> list[Tensor]:
        if self.training is None:
            raise ContractError(f"{self.name}: begin_task was not called")
        return self.training.parameters()

    def features(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None = None,
                 split: str = "train") -> Tensor:
        return model.forward_cls(images, self.training, mode=self.mode)

    def end_task(self, task: int) -> None:
        assert self.training is not None
        if self.fuse and self.inference is not None:
            self.inference = ppf_fuse(self.inference, self.training, self.alpha)
        else:
            self.inference = self.training.copy(trainable=False)
        _log.debug("prompts_finalised", method=self.name, task=task, fused=self.fuse and task > 0)

    def inference_features(self, model: ViTModel, images: np.ndarray,
                           index: np.ndarray | None = None, split: str = "test") -> np.ndarray:
        if self.inference is None:
            raise ContractError(f"{self.name}: no task has finished yet")
        return model.forward_cls(images, self.inference, mode=self.mode).data

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        return tag_mode(self.inference.to_arrays(), self.mode) if self.inference is not None else {}


class ConcatMethod(PromptMethod):
    """VPT baselines: one token set trained sequentially across tasks."""

    def __init__(self, model: ViTModel, mode: str, n: int = 4, seed: int = 0) -> None:
        self.name = f"vpt-{mode}"
        self.n = n
        self.prompts = ConcatPromptSet.create(model.config, n, mode, seed=seed, dtype=model.dtype)

    def begin_task(self, task: int) -> None:
        return None

    def trainable(self) -> list[Tensor]:
        return self.prompts.parameters()

    def features(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None = None,
                 split: str = "train") -> Tensor:
        return vpt_concat_forward(model, images, self.prompts)

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        return self.prompts.to_arrays()

    def cost_spec(self) -> MethodSpec:
        return method_spec_for(self.name, vpt_n=self.n)


class PoolMethod(PromptMethod):
    name = "pool"

    def __init__(self, model: ViTModel, pool_size: int = 10, n: int = 10, top_k: int = 1,
                 seed: int = 0) -> None:
        self.pool = PromptPool.create(model.config, pool_size, n, top_k, seed=seed, dtype=model.dtype)

    def begin_task(self, task: int) -> None:
        return None

    def trainable(self) -> list[Tensor]:
        return self.pool.parameters()

    def features(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None = None,
                 split: str = "train") -> Tensor:
        return pool_forward(model, images, self.pool)

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        return self.pool.to_arrays()

    def cost_spec(self) -> MethodSpec:
        return method_spec_for(self.name, pool_n=self.pool.n, pool_top_k=self.pool.top_k)


class LinearProbe(PromptMethod):
    """Head-only baseline. The backbone is frozen, so features are cached by
    (split, dataset index)."""

    name = "linear-probe"

    def __init__(self) -> None:
        self._cache: dict[tuple[str, int], np.ndarray] = {}

    def begin_task(self, task: int) -> None:
        return None

    def trainable(self) -> list[Tensor]:
        return []

    def _cached(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None,
                split: str) -> np.ndarray:
        if index is None:
            return model.forward_cls(images).data
        keys = [(split, int(i)) for i in index]
        missing = [j for j, k in enumerate(keys) if k not in self._cache]
        if missing:
            fresh = model.forward_cls(images[missing]).data
            for j, row in zip(missing, fresh):
                self._cache[keys[j]] = row
        return np.stack([self._cache[k] for k in keys])

    def features(self, model: ViTModel, images: np.ndarray, index: np.ndarray | None = None,
                 split: str = "train") -> Tensor:
        return Tensor(self._cached(model, images, index, split))

    def inference_features(self, model: ViTModel, images: np.ndarray,
                           index: np.ndarray | None = None, split: str = "test") -> np.ndarray:
        return self._cached(model, images, index, split)


def build_method(name: str, model: ViTModel, seed: int = 0, **params: Any) -> PromptMethod:
    """Strategy for a run method name. Recognised ``params``: alpha, warm_start,
    vpt_n, pool_size, pool_n, pool_top_k."""
    alpha = params.get("alpha", 0.7)
    warm = params.get("warm_start", WarmStart.FUSED)
    if name == "apt":
        return AdditiveMethod(model, name, alpha, fuse=True, warm_start=warm)
    if name == "apt-no-ppf":
        return AdditiveMethod(model, name, alpha, fuse=False, warm_start=warm)
    if name == "apt-input-level":
        return AdditiveMethod(model, name, alpha, fuse=True, mode="input", warm_start=warm)
    if name in ("vpt-shallow", "vpt-deep"):
        return ConcatMethod(model, name.split("-")[1], params.get("vpt_n", 4), seed)
    if name == "pool":
        return PoolMethod(model, params.get("pool_size", 10), params.get("pool_n", 10),
                          params.get("pool_top_k", 1), seed)
    if name == "linear-probe":
        return LinearProbe()
    method_spec_for(name)  # raises ConfigError naming the valid methods
    raise ConfigError(f"unknown method '{name}'")
