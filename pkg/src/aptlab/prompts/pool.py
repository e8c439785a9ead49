"""Simplified query-key prompt pool baseline.

The query is the plain frozen-backbone CLS embedding, so every prediction costs
one extra full forward pass. Keys are frozen random unit vectors; only the
prompt blocks train.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ContractError
from src.aptlab.tensor import Tensor, gather_rows, reshape
from src.aptlab.prompts.concat import insert_tokens
from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.model import ViTModel

INIT_STD = 0.02


@dataclass
class PromptPool:
    keys: np.ndarray      # (pool_size, d), unit rows, frozen
    prompts: Tensor       # (pool_size, n, d), trainable
    top_k: int = 1

    def __post_init__(self) -> None:
        if self.keys.shape[0] != self.prompts.shape[0]:
            raise ConfigError("PromptPool: keys and prompt blocks must share pool indices")
        if not 1 <= self.top_k <= self.pool_size:
            raise ConfigError(f"PromptPool: top_k {self.top_k} outside [1, {self.pool_size}]")

    @property
    def pool_size(self) -> int:
        return int(self.keys.shape[0])

    @property
    def n(self) -> int:
        return self.prompts.shape[1]

    @classmethod
    def create(
        cls, config: ViTConfig, pool_size: int, n: int, top_k: int = 1,
        seed: int = 0, dtype: Any = np.float32,
    ) -> PromptPool:
        if pool_size < 1:
            raise ContractError("PromptPool: pool must not be empty")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x9001, pool_size)))
        keys = rng.normal(size=(pool_size, config.dim))
        keys /= np.linalg.norm(keys, axis=1, keepdims=True)
        prompts = rng.normal(0.0, INIT_STD, (pool_size, n, config.dim)).astype(dtype)
        return cls(keys.astype(dtype), Tensor(prompts, requires_grad=True, name="pool.prompts"), top_k)

    def parameters(self) -> list[Tensor]:
        return [self.prompts]

    def num_params(self) -> int:
        return self.prompts.size

    def num_key_params(self) -> int:
        return int(self.keys.size)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"pool.keys": self.keys, "pool.prompts": self.prompts.data}


def rank_keys(query: np.ndarray, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine similarity (B, P) and key indices sorted best-first (ties -> lower index)."""
    q = query / np.maximum(np.linalg.norm(query, axis=-1, keepdims=True), 1e-12)
    k = keys / np.maximum(np.linalg.norm(keys, axis=-1, keepdims=True), 1e-12)
    sim = q @ k.T
    return sim, np.argsort(-sim, axis=-1, kind="stable")


def pool_select(model: ViTModel, images: Any, pool: PromptPool) -> tuple[np.ndarray, Tensor]:
    """Query pass + key ranking. Returns the selected indices (B, top_k) and the
    concatenated prompt blocks (B, top_k * n, d) in rank order."""
    if pool.pool_size == 0:
        raise ContractError("pool_select: empty pool")
    query = model.forward_cls(images).data
    _, order = rank_keys(query, pool.keys)
    idx = order[:, : pool.top_k]
    blocks = gather_rows(pool.prompts, idx)
    b = idx.shape[0]
    return idx, reshape(blocks, (b, pool.top_k * pool.n, pool.prompts.shape[2]))


def pool_forward(
    model: ViTModel, images: Any, pool: PromptPool, token_counts: list[int] | None = None
) -> Tensor:
    _, tokens = pool_select(model, images, pool)
    x = insert_tokens(model.patch_embed(images), tokens)
    for layer in range(model.config.depth):
        if token_counts is not None:
            token_counts.append(x.shape[-2])
        x = model.block_forward(x, layer)
    return model.final_cls(x)
