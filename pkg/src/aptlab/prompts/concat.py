"""Concatenation prompting baselines: tokens are inserted after CLS, so the
sequence grows from m+1 to m+1+n."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from src.aptlab.errors import ConfigError, ShapeError
from src.aptlab.tensor import Tensor, broadcast_rows, concat_rows, slice_rows
from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.model import ViTModel

INIT_STD = 0.02


@dataclass
class ConcatPromptSet:
    mode: Literal["shallow", "deep"]
    tokens: list[Tensor]  # (n, d) each; one entry for shallow, one per layer for deep

    @property
    def n(self) -> int:
        return self.tokens[0].shape[0]

    @classmethod
    def create(
        cls, config: ViTConfig, n: int, mode: str, seed: int = 0, dtype: Any = np.float32
    ) -> ConcatPromptSet:
        if n < 1:
            raise ConfigError(f"concat prompts need n >= 1, got {n}")
        if mode not in ("shallow", "deep"):
            raise ConfigError(f"unknown concat prompt mode '{mode}'")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0C, n)))
        count = 1 if mode == "shallow" else config.depth
        # random init: identical tokens would receive identical gradients forever
        tokens = [
            Tensor(rng.normal(0.0, INIT_STD, (n, config.dim)).astype(dtype),
                   requires_grad=True, name=f"vpt.{l}")
            for l in range(count)
        ]
        return cls(mode, tokens)  # type: ignore[arg-type]

    def parameters(self) -> list[Tensor]:
        return list(self.tokens)

    def num_params(self) -> int:
        return sum(t.size for t in self.tokens)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f"vpt.{l}": t.data for l, t in enumerate(self.tokens)}


def insert_tokens(x: Tensor, tokens: Tensor) -> Tensor:
    """[cls; tokens; rest] for tokens (n, d) shared or (B, n, d) per image."""
    if tokens.ndim == 2:
        tokens = broadcast_rows(tokens, x.shape[:-2])
    return concat_rows([slice_rows(x, 0, 1), tokens, slice_rows(x, 1, x.shape[-2])])


def replace_tokens(x: Tensor, tokens: Tensor, n: int) -> Tensor:
    """Drop the previous layer's n prompt outputs and insert fresh ones."""
    if tokens.ndim == 2:
        tokens = broadcast_rows(tokens, x.shape[:-2])
    return concat_rows([slice_rows(x, 0, 1), tokens, slice_rows(x, 1 + n, x.shape[-2])])


def vpt_concat_forward(
    model: ViTModel,
    images: Any,
    prompts: ConcatPromptSet,
    token_counts: list[int] | None = None,
    attn_out: list[np.ndarray] | None = None,
) -> Tensor:
    """Final CLS embedding (B, d) with prompt tokens concatenated after CLS."""
    cfg = model.config
    if any(t.shape != (prompts.n, cfg.dim) for t in prompts.tokens):
        raise ShapeError(f"vpt_concat_forward: prompt tokens must be ({prompts.n}, {cfg.dim})")
    if prompts.mode == "deep" and len(prompts.tokens) != cfg.depth:
        raise ShapeError(
            f"vpt_concat_forward: deep mode needs {cfg.depth} token sets, got {len(prompts.tokens)}"
        )
    x = insert_tokens(model.patch_embed(images), prompts.tokens[0])
    for layer in range(cfg.depth):
        if prompts.mode == "deep" and layer > 0:
            x = replace_tokens(x, prompts.tokens[layer], prompts.n)
        if token_counts is not None:
            token_counts.append(x.shape[-2])
        x = model.block_forward(x, layer, attn_out=attn_out)
    return model.final_cls(x)
