"""Miniature pre-norm Vision Transformer with frozen-parameter semantics.

Block layout (pre-norm, biases on every projection)::

    X = X + Wo . MHSA(LN1(X))      # CLS key/value rows optionally shifted
    X = X + MLP(LN2(X))

Prompt additions happen in the full d-dimensional K/V space, before the
projections are split into heads.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ContractError, ShapeError
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.tensor import (
    Tensor,
    add,
    broadcast_rows,
    concat_rows,
    gelu,
    layernorm,
    matmul,
    reshape,
    scale,
    softmax_rows,
    take_row,
    transpose,
)
from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.serialization import read_container, write_container

_log = get_logger("vit.model")

LN_EPS = 1e-6
INIT_STD = 0.02
CONFIG_KEY = "meta.config"
_CONFIG_FIELDS = ("image_size", "channels", "patch_size", "depth", "dim", "heads", "mlp_ratio")

BLOCK_PARAMS = (
    "ln1.g", "ln1.b",
    "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo",
    "ln2.g", "ln2.b",
    "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2",
)


def param_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names in serialization order."""
    d, hid = config.dim, config.dim * config.mlp_ratio
    shapes: dict[str, tuple[int, ...]] = {
        "patch.w": (config.patch_dim, d),
        "patch.b": (d,),
        "cls": (d,),
        "pos": (config.seq_len, d),
    }
    per_block = {
        "ln1.g": (d,), "ln1.b": (d,),
        "attn.wq": (d, d), "attn.bq": (d,),
        "attn.wk": (d, d), "attn.bk": (d,),
        "attn.wv": (d, d), "attn.bv": (d,),
        "attn.wo": (d, d), "attn.bo": (d,),
        "ln2.g": (d,), "ln2.b": (d,),
        "mlp.w1": (d, hid), "mlp.b1": (hid,),
        "mlp.w2": (hid, d), "mlp.b2": (d,),
    }
    for layer in range(config.depth):
        for key in BLOCK_PARAMS:
            shapes[f"block.{layer}.{key}"] = per_block[key]
    shapes["norm.g"] = (d,)
    shapes["norm.b"] = (d,)
    return shapes


def patchify(images: np.ndarray, config: ViTConfig) -> np.ndarray:
    """(B, C, H, W) -> (B, m, C*p*p), patches in row-major grid order."""
    if images.ndim != 4 or images.shape[1:] != (config.channels, config.image_size, config.image_size):
        raise ShapeError(
            f"patch_embed: image shape {images.shape[1:]} does not match config "
            f"{(config.channels, config.image_size, config.image_size)}"
        )
    b, c, p, g = images.shape[0], config.channels, config.patch_size, config.grid
    x = images.reshape(b, c, g, p, g, p).transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(x.reshape(b, g * g, c * p * p))


class ViTModel:

    def __init__(self, config: ViTConfig, params: dict[str, Tensor], frozen: bool = False) -> None:
        expected = param_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ConfigError(f"ViTModel: parameter set mismatch (missing={missing[:3]}, extra={extra[:3]})")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"ViTModel: {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {name: params[name] for name in expected}
        self.frozen = frozen

    # -- construction ---------------------------------------------------------

    @classmethod
    def init(cls, config: ViTConfig, seed: int = 0, dtype: Any = np.float32) -> ViTModel:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5617,)))
        params: dict[str, Tensor] = {}
        for name, shape in param_shapes(config).items():
            if name.endswith((".g",)):
                arr = np.ones(shape)
            elif len(shape) == 2 or name in ("cls",):
                arr = np.clip(rng.normal(0.0, INIT_STD, size=shape), -2 * INIT_STD, 2 * INIT_STD)
            else:
                arr = np.zeros(shape)
            params[name] = Tensor(arr.astype(dtype), name=name)
        return cls(config, params)

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def set_trainable(self, flag: bool) -> None:
        if flag and self.frozen:
            raise ContractError("ViTModel: cannot make a frozen backbone trainable")
        for t in self.params.values():
            t.requires_grad = flag
            t.grad = np.zeros_like(t.data) if flag else None

    def freeze(self) -> None:
        """Stop gradients and round weights to f32-representable values so the
        APTW round trip is bitwise exact."""
        self.set_trainable(False)
        for t in self.params.values():
            t.data = t.data.astype(np.float32).astype(t.data.dtype)
        self.frozen = True

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def matches_snapshot(self, snap: dict[str, np.ndarray]) -> bool:
        return all(np.array_equal(self.params[n].data, arr) for n, arr in snap.items())

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.params["cls"].data.dtype

    def _p(self, layer: int, key: str) -> Tensor:
        return self.params[f"block.{layer}.{key}"]

    # -- forward --------------------------------------------------------------

    def as_batch(self, images: np.ndarray | Tensor) -> np.ndarray:
        arr = images.data if isinstance(images, Tensor) else np.asarray(images)
        if arr.ndim == 3:
            arr = arr[None]
        return arr.astype(self.dtype, copy=False)

    def patch_embed(self, images: np.ndarray | Tensor) -> Tensor:
        """Images (B, C, H, W) or (C, H, W) -> tokens (B, m+1, d); row 0 is CLS,
        positional embeddings added to every row."""
        patches = Tensor(patchify(self.as_batch(images), self.config))
        b = patches.shape[0]
        x = add(matmul(patches, self.params["patch.w"], tag="patch_embed"), self.params["patch.b"])
        cls = broadcast_rows(reshape(self.params["cls"], (1, self.config.dim)), (b,))
        return add(concat_rows([cls, x]), self.params["pos"])

    def block_forward(
        self,
        x: Tensor,
        layer: int,
        kv_delta: tuple[Tensor, Tensor] | None = None,
        input_delta: Tensor | None = None,
        attn_out: list[np.ndarray] | None = None,
    ) -> Tensor:
        """One pre-norm block over tokens (..., N, d).

        ``kv_delta = (p_k, p_v)`` shifts the CLS row of K and V after projection;
        ``input_delta`` shifts the CLS row of the block input instead (ablation).
        """
        cfg = self.config
        if not 0 <= layer < cfg.depth:
            raise ConfigError(f"block_forward: layer {layer} out of range [0, {cfg.depth})")
        if x.shape[-1] != cfg.dim:
            raise ShapeError(f"block_forward: token width {x.shape[-1]} != dim {cfg.dim}")
        from src.aptlab.prompts.additive import apply_additive, apply_input_level  # prompts imports ViTModel

        if input_delta is not None:
            x = apply_input_level(x, input_delta)
        p = lambda key: self._p(layer, key)  # noqa: E731
        h = layernorm(x, p("ln1.g"), p("ln1.b"), LN_EPS)
        q = add(matmul(h, p("attn.wq"), tag="qkv_proj"), p("attn.bq"))
        k = add(matmul(h, p("attn.wk"), tag="qkv_proj"), p("attn.bk"))
        v = add(matmul(h, p("attn.wv"), tag="qkv_proj"), p("attn.bv"))
        if kv_delta is not None:
            k, v = apply_additive(k, v, *kv_delta)

        lead, n = x.shape[:-2], x.shape[-2]
        nd = len(lead)
        split = lead + (n, cfg.heads, cfg.head_dim)
        heads_first = tuple(range(nd)) + (nd + 1, nd, nd + 2)
        qh = transpose(reshape(q, split), heads_first)
        kh = transpose(reshape(k, split), heads_first)
        vh = transpose(reshape(v, split), heads_first)
        kt = transpose(kh, tuple(range(nd + 1)) + (nd + 2, nd + 1))
        scores = scale(matmul(qh, kt, tag="attn_scores"), 1.0 / math.sqrt(cfg.head_dim))
        attn = softmax_rows(scores)
        if attn_out is not None:
            attn_out.append(attn.data.copy())
        ctx = matmul(attn, vh, tag="attn_values")
        ctx = reshape(transpose(ctx, heads_first), lead + (n, cfg.dim))
        x = add(x, add(matmul(ctx, p("attn.wo"), tag="out_proj"), p("attn.bo")))

        h2 = layernorm(x, p("ln2.g"), p("ln2.b"), LN_EPS)
        hid = gelu(add(matmul(h2, p("mlp.w1"), tag="mlp"), p("mlp.b1")))
        return add(x, add(matmul(hid, p("mlp.w2"), tag="mlp"), p("mlp.b2")))

    def final_cls(self, x: Tensor) -> Tensor:
        """Final layernorm applied to the CLS row: f(x) of shape (..., d)."""
        return layernorm(take_row(x, 0), self.params["norm.g"], self.params["norm.b"], LN_EPS)

    def forward_cls(
        self,
        images: np.ndarray | Tensor,
        prompts: Any = None,
        mode: str = "kv",
        attn_out: list[np.ndarray] | None = None,
        token_counts: list[int] | None = None,
    ) -> Tensor:
        """Final CLS embedding f(x), shape (B, d).

        ``prompts`` is a PromptSet-like object exposing ``layers`` as a sequence of
        (p_k, p_v) pairs; ``mode`` "kv" adds them to the CLS key/value rows, "input"
        adds p_k to the CLS row of each block input.
        """
        if prompts is not None and len(prompts.layers) != self.config.depth:
            raise ShapeError(
                f"forward_cls: prompt set has {len(prompts.layers)} layers, model has {self.config.depth}"
            )
        if mode not in ("kv", "input"):
            raise ConfigError(f"forward_cls: unknown prompt mode '{mode}'")
        x = self.patch_embed(images)
        for layer in range(self.config.depth):
            if token_counts is not None:
                token_counts.append(x.shape[-2])
            if prompts is None:
                x = self.block_forward(x, layer, attn_out=attn_out)
            elif mode == "kv":
                x = self.block_forward(x, layer, kv_delta=prompts.layers[layer], attn_out=attn_out)
            else:
                x = self.block_forward(x, layer, input_delta=prompts.layers[layer][0], attn_out=attn_out)
        return self.final_cls(x)

    # -- serialization --------------------------------------------------------

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {CONFIG_KEY: np.array([getattr(self.config, f) for f in _CONFIG_FIELDS], dtype=np.float32)}
        arrays.update({n: t.data for n, t in self.params.items()})
        return arrays


def save_weights(model: ViTModel, path: Path | str) -> None:
    write_container(path, model.to_arrays())
    _log.info("weights_saved", path=str(path), tensors=len(model.params))


def load_weights(path: Path | str, frozen: bool = True) -> ViTModel:
    arrays = read_container(path)
    if CONFIG_KEY not in arrays:
        raise ConfigError(f"{path}: no '{CONFIG_KEY}' entry, not a backbone weight file")
    geometry = arrays.pop(CONFIG_KEY)
    config = ViTConfig(**{f: int(v) for f, v in zip(_CONFIG_FIELDS, geometry)})
    params = {n: Tensor(a, name=n) for n, a in arrays.items()}
    return ViTModel(config, params, frozen=frozen)
