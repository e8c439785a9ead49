"""Additive KV prompts: two d-vectors per layer added to the CLS token's key
and value projections, plus Progressive Prompt Fusion of old and new sets."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ContractError, ShapeError, shape_error
from src.aptlab.tensor import Tensor, add, add_row
from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.serialization import read_container, write_container

MODE_KEY = "meta.prompt_mode"
PROMPT_MODES = ("kv", "input")


class WarmStart(str, Enum):
    """Where training of task t+1 starts from."""

    FUSED = "fused"      # the fused set used for inference after task t
    TRAINED = "trained"  # the un-fused prompts trained on task t
    FRESH = "fresh"      # zeros


@dataclass
class PromptSet:
    layers: list[tuple[Tensor, Tensor]]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return self.layers[0][0].shape[0] if self.layers else 0

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]

    def num_params(self) -> int:
        return sum(t.size for t in self.parameters())

    def copy(self, trainable: bool = True) -> PromptSet:
        return PromptSet([
            (Tensor(k.data.copy(), requires_grad=trainable, name=k.name),
             Tensor(v.data.copy(), requires_grad=trainable, name=v.name))
            for k, v in self.layers
        ])

    def to_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer, (k, v) in enumerate(self.layers):
            out[f"prompt.{layer}.k"] = k.data
            out[f"prompt.{layer}.v"] = v.data
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], trainable: bool = False) -> PromptSet:
        depth = sum(1 for n in arrays if n.startswith("prompt.") and n.endswith(".k"))
        layers = []
        for layer in range(depth):
            try:
                k, v = arrays[f"prompt.{layer}.k"], arrays[f"prompt.{layer}.v"]
            except KeyError as e:
                raise ConfigError(f"prompt container missing {e}") from None
            layers.append((
                Tensor(k.copy(), requires_grad=trainable, name=f"prompt.{layer}.k"),
                Tensor(v.copy(), requires_grad=trainable, name=f"prompt.{layer}.v"),
            ))
        return cls(layers)


def init_prompts(config: ViTConfig, dtype: Any = np.float32) -> PromptSet:
    """Zero-initialised trainable prompts, 2 * L * d values."""
    return PromptSet([
        (Tensor(np.zeros(config.dim, dtype=dtype), requires_grad=True, name=f"prompt.{l}.k"),
         Tensor(np.zeros(config.dim, dtype=dtype), requires_grad=True, name=f"prompt.{l}.v"))
        for l in range(config.depth)
    ])


def apply_additive(k: Tensor, v: Tensor, p_k: Tensor, p_v: Tensor) -> tuple[Tensor, Tensor]:
    """(k_cls + p_k, v_cls + p_v).

    ``k``/``v`` are either the CLS key/value vectors (d,) or whole projected
    K/V token matrices (..., N, d), in which case only row 0 (CLS) moves and
    every other row passes through bitwise unchanged."""
    if k.ndim == 0 or not (k.shape == v.shape and p_k.shape == p_v.shape == (k.shape[-1],)):
        raise shape_error("apply_additive", k.shape, v.shape, p_k.shape, p_v.shape)
    if k.ndim == 1:
        return add(k, p_k), add(v, p_v)
    return add_row(k, p_k, 0, tag="prompt_add"), add_row(v, p_v, 0, tag="prompt_add")


def apply_input_level(x: Tensor, p: Tensor) -> Tensor:
    """Ablation: shift the CLS row of the block input instead of its K/V."""
    return add_row(x, p, 0, tag="prompt_add")


def ppf_fuse(old: PromptSet, new: PromptSet, alpha: float) -> PromptSet:
    """Inference-only fusion ``alpha * old + (1 - alpha) * new``, layer by layer."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"ppf_fuse: alpha must lie in [0, 1], got {alpha}")
    if old.depth != new.depth or old.dim != new.dim:
        raise ShapeError(
            f"ppf_fuse: geometry mismatch ({old.depth}x{old.dim} vs {new.depth}x{new.dim})"
        )
    if alpha == 1.0:
        return old.copy(trainable=False)
    if alpha == 0.0:
        return new.copy(trainable=False)
    layers = []
    for (ok, ov), (nk, nv) in zip(old.layers, new.layers):
        layers.append((
            Tensor(alpha * ok.data + (1.0 - alpha) * nk.data, name=nk.name),
            Tensor(alpha * ov.data + (1.0 - alpha) * nv.data, name=nv.name),
        ))
    return PromptSet(layers)


def save_prompts(prompts: PromptSet, path: Path | str, mode: str = "kv") -> None:
    write_container(path, tag_mode(prompts.to_arrays(), mode))


def load_prompts(path: Path | str, trainable: bool = False) -> PromptSet:
    return PromptSet.from_arrays(read_container(path), trainable=trainable)


def tag_mode(arrays: dict[str, np.ndarray], mode: str) -> dict[str, np.ndarray]:
    """Record where the prompts are inserted ("kv" or "input") next to them."""
    if mode not in PROMPT_MODES:
        raise ConfigError(f"unknown prompt mode '{mode}', expected one of {PROMPT_MODES}")
    return {**arrays, MODE_KEY: np.array([PROMPT_MODES.index(mode)], dtype=np.float32)}


def stored_mode(arrays: dict[str, np.ndarray]) -> str:
    """Insertion mode saved by ``tag_mode``; containers without one are "kv"."""
    if MODE_KEY not in arrays:
        return "kv"
    code = arrays[MODE_KEY].reshape(-1)
    if code.size != 1 or code[0] != int(code[0]) or not 0 <= code[0] < len(PROMPT_MODES):
        raise ConfigError(f"prompt container holds an invalid mode marker {code.tolist()}")
    return PROMPT_MODES[int(code[0])]
