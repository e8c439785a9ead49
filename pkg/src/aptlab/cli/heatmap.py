"""CLS-to-patch attention maps as ASCII PGM images plus raw-weight CSV."""
from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ContractError
from src.aptlab.vit.model import ViTModel


def cls_attention_map(
    model: ViTModel, image: np.ndarray, layer: int, prompts: Any = None, mode: str = "kv"
) -> np.ndarray:
    """Head-averaged attention from CLS to every patch at ``layer``, CLS
    self-weight dropped, laid out on the (grid x grid) patch grid. ``mode`` must
    be the insertion mode the prompts were trained with."""
    cfg = model.config
    if not 0 <= layer < cfg.depth:
        raise ConfigError(f"heatmap: layer {layer} outside [0, {cfg.depth})")
    maps: list[np.ndarray] = []
    model.forward_cls(image, prompts, mode=mode, attn_out=maps)
    attn = maps[layer][0]                      # (heads, N, N)
    row = attn[:, 0, :].mean(axis=0)[1:]       # CLS row, patches only
    return row.reshape(cfg.grid, cfg.grid)


def to_gray(weights: np.ndarray) -> np.ndarray:
    """Min-max scale to integers in [0, 255]; a flat map becomes all zeros."""
    lo, hi = float(weights.min()), float(weights.max())
    if hi <= lo:
        return np.zeros(weights.shape, dtype=np.int64)
    return np.rint((weights - lo) / (hi - lo) * 255.0).astype(np.int64)


def pgm_text(gray: np.ndarray) -> str:
    h, w = gray.shape
    if gray.min() < 0 or gray.max() > 255:
        raise ContractError("pgm_text: gray levels must lie in [0, 255]")
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(int(v)) for v in row) for row in gray]
    return "\n".join(lines) + "\n"


def csv_text(weights: np.ndarray) -> str:
    return "\n".join(",".join(f"{float(v):.17g}" for v in row) for row in weights) + "\n"


def write_heatmap(weights: np.ndarray, out: Path | str) -> tuple[Path, Path]:
    """Writes ``<out>.pgm`` and ``<out>.csv``."""
    base = Path(out)
    base.parent.mkdir(parents=True, exist_ok=True)
    pgm, csv = base.with_suffix(".pgm"), base.with_suffix(".csv")
    pgm.write_text(pgm_text(to_gray(weights)), encoding="ascii")
    csv.write_text(csv_text(weights), encoding="ascii")
    return pgm, csv
