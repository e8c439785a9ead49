"""Experiment configuration: "key = value" files plus command-line overrides,
validated by pydantic. Unknown keys are rejected."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Iterable, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.aptlab.errors import ConfigError

GEOMETRY_KEYS = ("image_size", "channels", "patch_size", "depth", "dim", "heads", "mlp_ratio")

Method = Literal[
    "apt", "apt-no-ppf", "apt-input-level", "vpt-shallow", "vpt-deep", "pool", "linear-probe",
]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # backbone geometry
    preset: Literal["tiny", "vit_b16", "gradcheck", "custom"] = "tiny"
    image_size: int = Field(32, gt=0)
    channels: int = Field(1, gt=0)
    patch_size: int = Field(8, gt=0)
    depth: int = Field(4, gt=0)
    dim: int = Field(64, gt=0)
    heads: int = Field(4, gt=0)
    mlp_ratio: int = Field(4, gt=0)

    # CIL run
    method: Method = "apt"
    alpha: float = Field(0.7, ge=0.0, le=1.0)
    warm_start: Literal["fused", "trained", "fresh"] = "fused"
    tasks: int = Field(5, gt=0)
    seed: int = Field(0, ge=0)
    epochs: int = Field(20, gt=0)
    batch_size: int = Field(32, gt=0)
    lr_prompt: float = Field(3e-3, ge=0.0)
    lr_head: float = Field(1e-2, ge=0.0)
    eval_batch: int = Field(256, gt=0)
    vpt_n: int = Field(4, gt=0)
    pool_size: int = Field(10, gt=0)
    pool_n: int = Field(10, gt=0)
    pool_top_k: int = Field(1, gt=0)
    sweep_alphas: list[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8])

    # pretraining
    pretrain_epochs: int = Field(15, gt=0)
    pretrain_lr: float = Field(1e-3, gt=0.0)
    pretrain_seed: int = Field(0, ge=0)

    # synthetic data
    data_seed: int = Field(0, ge=0)
    pretrain_classes: int = Field(40, gt=0)
    cil_classes: int = Field(40, gt=0)
    train_per_class: int = Field(100, gt=0)
    test_per_class: int = Field(50, gt=0)
    noise_sigma: float = Field(0.25, ge=0.0)
    max_shift: int = Field(2, ge=0)
    template_grid: int = Field(4, gt=0)

    # flops table
    flops_methods: list[str] = Field(
        default_factory=lambda: ["plain", "apt", "vpt-shallow", "vpt-deep", "pool"]
    )

    @model_validator(mode="before")
    @classmethod
    def _preset_geometry(cls, data: Any) -> Any:
        """A named preset owns the geometry: its values fill the geometry keys,
        and an explicit key that disagrees with it is an error."""
        if not isinstance(data, dict) or data.get("preset", "tiny") == "custom":
            return data
        from src.aptlab.vit.config import ViTConfig

        try:
            geo = ViTConfig.preset(str(data.get("preset", "tiny")))
        except ConfigError as e:
            raise ValueError(str(e)) from None
        clashes = [k for k in GEOMETRY_KEYS if k in data and data[k] != getattr(geo, k)]
        if clashes:
            raise ValueError(
                f"geometry keys {clashes} conflict with preset '{data.get('preset', 'tiny')}'; "
                "set preset = custom to choose the geometry"
            )
        return {**data, **{k: getattr(geo, k) for k in GEOMETRY_KEYS}}

    def vit_config(self) -> Any:
        from src.aptlab.vit.config import ViTConfig

        if self.preset != "custom":
            return ViTConfig.preset(self.preset)
        return ViTConfig(
            image_size=self.image_size, channels=self.channels, patch_size=self.patch_size,
            depth=self.depth, dim=self.dim, heads=self.heads, mlp_ratio=self.mlp_ratio,
        )

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def parse_value(raw: str) -> Any:
    """Type a config value the way YAML would (ints, floats, bools, lists)."""
    raw = raw.strip()
    if not raw:
        return ""
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, raw = line.split("=", 1)
        values[key.strip()] = parse_value(raw)
    return values


def parse_overrides(pairs: Iterable[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' must look like key=value")
        key, raw = pair.split("=", 1)
        out[key.strip()] = parse_value(raw)
    return out


def _validate(values: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{where}: {first['msg']}") from None


def load_run_config(path: Path | str | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults <- file <- overrides, validated once at the end."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return _validate(values)
