from __future__ import annotations

from dataclasses import dataclass

from src.aptlab.errors import ConfigError


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    channels: int = 1
    patch_size: int = 8
    depth: int = 4
    dim: int = 64
    heads: int = 4
    mlp_ratio: int = 4

    def __post_init__(self) -> None:
        for name in ("image_size", "channels", "patch_size", "depth", "dim", "heads", "mlp_ratio"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"ViTConfig.{name} must be positive, got {getattr(self, name)}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid * self.grid

    @property
    def seq_len(self) -> int:
        # one CLS token in front of the patch tokens
        return self.n_patches + 1

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size * self.patch_size

    @classmethod
    def tiny(cls) -> ViTConfig:
        return cls()

    @classmethod
    def vit_b16(cls) -> ViTConfig:
        return cls(image_size=224, channels=3, patch_size=16, depth=12, dim=768, heads=12)

    @classmethod
    def gradcheck(cls) -> ViTConfig:
        return cls(image_size=12, channels=1, patch_size=3, depth=2, dim=16, heads=2)

    @classmethod
    def preset(cls, name: str) -> ViTConfig:
        presets = {"tiny": cls.tiny, "vit_b16": cls.vit_b16, "gradcheck": cls.gradcheck}
        if name not in presets:
            raise ConfigError(f"unknown ViT preset '{name}' (known: {sorted(presets)})")
        return presets[name]()
