"""Analytic multiply-accumulate model of a ViT forward under each prompting
method, and trainable prompt-parameter accounting.

Per block with N tokens: 4*N*d^2 (Q, K, V, output projections) + 2*N^2*d
(scores, weighted values) + 2*r*N*d^2 (MLP). Headline convention: one MAC is
reported as one FLOP, transformer blocks only (no patch embedding, no head).
Additive prompts cost 2*d elementwise adds per layer; those are reported
separately and kept out of the headline.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np

from src.aptlab.errors import ConfigError
from src.aptlab.tensor import count_macs
from src.aptlab.vit.config import ViTConfig

BLOCK_TAGS = ("qkv_proj", "attn_scores", "attn_values", "out_proj", "mlp")


class MethodKind(str, Enum):
    PLAIN = "plain"
    APT = "apt"
    APT_INPUT = "apt-input"
    VPT_SHALLOW = "vpt-shallow"
    VPT_DEEP = "vpt-deep"
    POOL = "pool"


@dataclass(frozen=True)
class MethodSpec:
    kind: MethodKind
    n: int = 0                 # prompt tokens per insertion (concat and pool kinds)
    top_k: int = 1             # pool: blocks selected per image
    query_pass: bool = False   # pool: extra plain forward to build the query
    depth: int | None = None   # vpt-deep insertion depth; None = every layer

    def __post_init__(self) -> None:
        if self.kind in (MethodKind.PLAIN, MethodKind.APT, MethodKind.APT_INPUT):
            if self.n or self.query_pass:
                raise ConfigError(f"{self.kind.value}: takes no prompt length and no query pass")
        elif self.n < 1:
            raise ConfigError(f"{self.kind.value}: prompt length n must be >= 1")
        if self.kind is MethodKind.POOL and not self.query_pass:
            raise ConfigError("pool: a query pass is required")
        if self.kind is not MethodKind.POOL and self.query_pass:
            raise ConfigError(f"{self.kind.value}: query pass is only defined for pool kinds")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")

    @property
    def inserted_tokens(self) -> int:
        if self.kind is MethodKind.POOL:
            return self.n * self.top_k
        if self.kind in (MethodKind.VPT_SHALLOW, MethodKind.VPT_DEEP):
            return self.n
        return 0

    @property
    def label(self) -> str:
        if self.kind in (MethodKind.VPT_SHALLOW, MethodKind.VPT_DEEP):
            return f"{self.kind.value}(n={self.n})"
        if self.kind is MethodKind.POOL:
            return f"pool(n={self.n},top_k={self.top_k})"
        return self.kind.value

    @classmethod
    def plain(cls) -> MethodSpec:
        return cls(MethodKind.PLAIN)

    @classmethod
    def apt(cls) -> MethodSpec:
        return cls(MethodKind.APT)

    @classmethod
    def vpt_shallow(cls, n: int = 4) -> MethodSpec:
        return cls(MethodKind.VPT_SHALLOW, n=n)

    @classmethod
    def vpt_deep(cls, n: int = 4) -> MethodSpec:
        return cls(MethodKind.VPT_DEEP, n=n)

    @classmethod
    def pool(cls, n: int = 10, top_k: int = 1) -> MethodSpec:
        return cls(MethodKind.POOL, n=n, top_k=top_k, query_pass=True)


@dataclass
class ParamReport:
    method: str
    prompt_params: int
    key_params: int = 0

    @property
    def total(self) -> int:
        return self.prompt_params + self.key_params


@dataclass
class FlopsReport:
    method: str
    qkv_proj: int = 0
    attn_scores: int = 0
    attn_values: int = 0
    out_proj: int = 0
    mlp: int = 0
    query_pass: int = 0
    prompt_elementwise: int = 0   # reported, excluded from the headline
    plain_total: int = 0
    tokens_per_layer: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return (self.qkv_proj + self.attn_scores + self.attn_values + self.out_proj
                + self.mlp + self.query_pass)

    @property
    def gmacs(self) -> float:
        return self.total / 1e9

    @property
    def ratio(self) -> float:
        return self.total / self.plain_total if self.plain_total else 1.0


def block_macs(tokens: int, dim: int, mlp_ratio: int) -> dict[str, int]:
    n, d = tokens, dim
    return {
        "qkv_proj": 3 * n * d * d,
        "attn_scores": n * n * d,
        "attn_values": n * n * d,
        "out_proj": n * d * d,
        "mlp": 2 * mlp_ratio * n * d * d,
    }


def _blocks_total(config: ViTConfig, tokens: int) -> int:
    return config.depth * sum(block_macs(tokens, config.dim, config.mlp_ratio).values())


def flops_forward(config: ViTConfig, method: MethodSpec) -> FlopsReport:
    base = config.seq_len
    tokens = base + method.inserted_tokens
    report = FlopsReport(method=method.label, plain_total=_blocks_total(config, base))
    for _ in range(config.depth):
        for k, v in block_macs(tokens, config.dim, config.mlp_ratio).items():
            setattr(report, k, getattr(report, k) + v)
        report.tokens_per_layer.append(tokens)
    if method.query_pass:
        report.query_pass = report.plain_total
    if method.kind is MethodKind.APT:
        report.prompt_elementwise = 2 * config.dim * config.depth
    elif method.kind is MethodKind.APT_INPUT:
        report.prompt_elementwise = config.dim * config.depth
    return report


def count_trainable_params(
    method: MethodSpec, config: ViTConfig, pool_size: int | None = None
) -> ParamReport:
    """Prompt-only parameter count (classifier excluded); pool keys reported separately."""
    L, d = config.depth, config.dim
    kind = method.kind
    if kind is MethodKind.PLAIN:
        return ParamReport(method.label, 0)
    if kind is MethodKind.APT:
        return ParamReport(method.label, 2 * L * d)
    if kind is MethodKind.APT_INPUT:
        return ParamReport(method.label, L * d)
    if kind is MethodKind.VPT_SHALLOW:
        return ParamReport(method.label, method.n * d)
    if kind is MethodKind.VPT_DEEP:
        return ParamReport(method.label, (method.depth or L) * method.n * d)
    if pool_size is None:
        raise ConfigError("count_trainable_params: pool kinds need pool_size")
    return ParamReport(method.label, pool_size * method.n * d, key_params=pool_size * d)


def flops_table(
    config: ViTConfig, methods: Iterable[MethodSpec], pool_size: int = 10
) -> list[tuple[FlopsReport, ParamReport]]:
    return [
        (flops_forward(config, m), count_trainable_params(m, config, pool_size))
        for m in methods
    ]


def flops_csv(rows: list[tuple[FlopsReport, ParamReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "gmacs", "ratio", "trainable_prompt_params"])
    for f, p in rows:
        w.writerow([f.method, f"{f.gmacs:.4f}", f"{f.ratio:.4f}", p.prompt_params])
    return buf.getvalue()


def empirical_macs(model: Any, method: MethodSpec, images: np.ndarray, pool_size: int = 10) -> int:
    """Run one instrumented forward of ``model`` under ``method`` and return the
    MACs counted inside transformer blocks (the query pass included), per image."""
    from src.aptlab.prompts import ConcatPromptSet, PromptPool, init_prompts, pool_forward, vpt_concat_forward

    cfg = model.config
    with count_macs() as counter:
        if method.kind is MethodKind.PLAIN:
            model.forward_cls(images)
        elif method.kind in (MethodKind.APT, MethodKind.APT_INPUT):
            mode = "kv" if method.kind is MethodKind.APT else "input"
            model.forward_cls(images, init_prompts(cfg, model.dtype), mode=mode)
        elif method.kind in (MethodKind.VPT_SHALLOW, MethodKind.VPT_DEEP):
            mode = "shallow" if method.kind is MethodKind.VPT_SHALLOW else "deep"
            vpt_concat_forward(model, images, ConcatPromptSet.create(cfg, method.n, mode, dtype=model.dtype))
        else:
            pool = PromptPool.create(cfg, pool_size, method.n, method.top_k, dtype=model.dtype)
            pool_forward(model, images, pool)
    batch = images.shape[0] if images.ndim == 4 else 1
    return sum(counter.macs.get(t, 0) for t in BLOCK_TAGS) // batch


RUN_METHODS = (
    "apt", "apt-no-ppf", "apt-input-level", "vpt-shallow", "vpt-deep", "pool", "linear-probe",
)


def method_spec_for(method: str, vpt_n: int = 4, pool_n: int = 10, pool_top_k: int = 1) -> MethodSpec:
    """Cost structure of a CIL run method. Fusion happens once per task outside
    the forward pass, so apt and apt-no-ppf cost the same."""
    if method in ("apt", "apt-no-ppf"):
        return MethodSpec.apt()
    if method == "apt-input-level":
        return MethodSpec(MethodKind.APT_INPUT)
    if method == "vpt-shallow":
        return MethodSpec.vpt_shallow(vpt_n)
    if method == "vpt-deep":
        return MethodSpec.vpt_deep(vpt_n)
    if method == "pool":
        return MethodSpec.pool(pool_n, pool_top_k)
    if method in ("linear-probe", "plain"):
        return MethodSpec.plain()
    raise ConfigError(f"unknown method '{method}' (expected one of {', '.join(RUN_METHODS)})")
