"""Deterministic synthetic class-image generator.

Every class c owns a smooth template T_c (a seeded coarse grid, bilinearly
upsampled). A sample is ``clamp(roll(T_c, dy, dx) + sigma * N(0, 1), 0, 1)``
with integer shifts in [-max_shift, max_shift]. Randomness comes from numpy's
PCG64 with ``SeedSequence(seed, spawn_key=...)`` substreams keyed by
(class, split, sample index), so any sample can be regenerated in isolation and
generation order does not matter.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from src.aptlab.errors import ConfigError, ShapeError
from src.aptlab.logging.error_handler import get_logger, log_warning

_log = get_logger("data.synth")

_TEMPLATE_STREAM = 1
_SAMPLE_STREAM = 2
SPLIT_IDS = {"train": 0, "test": 1}
SEPARABILITY_FACTOR = 4.0


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 40
    train_per_class: int = 100
    test_per_class: int = 50
    image_size: int = 32
    channels: int = 1
    noise_sigma: float = 0.25
    max_shift: int = 2
    seed: int = 0
    # first global class id; disjoint universes use disjoint offsets
    class_offset: int = 0
    grid: int = 4

    def __post_init__(self) -> None:
        if self.n_classes < 1 or self.train_per_class < 0 or self.test_per_class < 0:
            raise ConfigError("SynthSpec: class and sample counts must be positive")
        if self.image_size < 1 or self.channels < 1 or self.grid < 1:
            raise ConfigError("SynthSpec: image_size, channels and grid must be positive")
        if self.noise_sigma < 0:
            raise ConfigError(f"SynthSpec: noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.max_shift < self.image_size / 2:
            raise ConfigError(
                f"SynthSpec: max_shift must lie in [0, image_size/2), got {self.max_shift}"
            )
        if self.class_offset < 0 or self.class_offset + self.n_classes > 0xFFFF:
            raise ConfigError("SynthSpec: class ids must fit in u16")

    @property
    def classes(self) -> list[int]:
        return list(range(self.class_offset, self.class_offset + self.n_classes))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Dataset:
    images: np.ndarray   # (S, C, H, W) float32 in [0, 1]
    labels: np.ndarray   # (S,) global class ids
    n_classes: int       # class-universe bound: every label < n_classes
    split: str = "train"

    def __post_init__(self) -> None:
        if self.images.ndim != 4 or self.labels.shape != (self.images.shape[0],):
            raise ShapeError(
                f"Dataset: images {self.images.shape} / labels {self.labels.shape} disagree"
            )
        if self.labels.size and int(self.labels.max()) >= self.n_classes:
            raise ConfigError(f"Dataset: label {int(self.labels.max())} >= n_classes {self.n_classes}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        c, h, w = self.images.shape[1:]
        return int(c), int(h), int(w)

    def subset(self, indices: np.ndarray) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.n_classes, self.split)


def _upsample_matrix(size: int, grid: int) -> np.ndarray:
    """(size x grid) bilinear interpolation weights, pixel centres aligned."""
    pos = np.clip((np.arange(size) + 0.5) * grid / size - 0.5, 0.0, grid - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, grid - 1)
    frac = pos - lo
    m = np.zeros((size, grid))
    m[np.arange(size), lo] += 1.0 - frac
    m[np.arange(size), hi] += frac
    return m


def make_template(spec: SynthSpec, cls: int) -> np.ndarray:
    """Template T_c of global class ``cls``, shape (C, H, W), values in [0, 1]."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(_TEMPLATE_STREAM, cls)))
    coarse = rng.random((spec.channels, spec.grid, spec.grid))
    up = _upsample_matrix(spec.image_size, spec.grid)
    return np.einsum("hi,cij,wj->chw", up, coarse, up)


def make_sample(spec: SynthSpec, template: np.ndarray, cls: int, split: str, index: int) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(_SAMPLE_STREAM, cls, SPLIT_IDS[split], index))
    )
    dy, dx = rng.integers(-spec.max_shift, spec.max_shift + 1, size=2)
    img = np.roll(template, (int(dy), int(dx)), axis=(1, 2))
    if spec.noise_sigma > 0:
        img = img + spec.noise_sigma * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def templates(spec: SynthSpec) -> dict[int, np.ndarray]:
    return {c: make_template(spec, c) for c in spec.classes}


def generate(spec: SynthSpec, split: str = "train") -> Dataset:
    if split not in SPLIT_IDS:
        raise ConfigError(f"generate: unknown split '{split}'")
    per_class = spec.train_per_class if split == "train" else spec.test_per_class
    temps = templates(spec)
    check_separability(temps, spec)
    images = np.empty(
        (spec.n_classes * per_class, spec.channels, spec.image_size, spec.image_size),
        dtype=np.float32,
    )
    labels = np.empty(spec.n_classes * per_class, dtype=np.int64)
    row = 0
    for c in spec.classes:
        for i in range(per_class):
            images[row] = make_sample(spec, temps[c], c, split, i)
            labels[row] = c
            row += 1
    _log.info("dataset_generated", split=split, samples=row, classes=spec.n_classes,
              class_offset=spec.class_offset)
    return Dataset(images, labels, spec.class_offset + spec.n_classes, split)


def check_separability(temps: dict[int, np.ndarray], spec: SynthSpec) -> bool:
    """Min pairwise template distance vs ``SEPARABILITY_FACTOR`` times the
    expected distance of a noisy sample from its own template, sigma * sqrt(D).

    The bound is conservative: nearest-template error depends on the noise
    along the line between two templates (sigma), so the default data can sit
    below it and still classify near perfectly. A miss is logged, not raised."""
    if len(temps) < 2:
        return True
    flat = np.stack([t.reshape(-1) for t in temps.values()])
    sq = (flat * flat).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T, 0.0)
    np.fill_diagonal(d2, np.inf)
    min_dist = float(np.sqrt(d2.min()))
    noise_dist = spec.noise_sigma * math.sqrt(flat.shape[1])
    floor = SEPARABILITY_FACTOR * noise_dist
    if min_dist <= floor:
        log_warning(_log, "check_separability",
                    f"closest templates {min_dist:.3f} apart, below {floor:.3f} "
                    f"({SEPARABILITY_FACTOR:g} x noise distance {noise_dist:.3f}); "
                    f"{min_dist / spec.noise_sigma:.1f} sigma along their difference")
        return False
    return True


def nearest_template_accuracy(ds: Dataset, temps: dict[int, np.ndarray]) -> float:
    """Oracle: classify each sample by L2 distance to every template."""
    ids = np.array(sorted(temps))
    flat = np.stack([temps[c].reshape(-1) for c in ids])
    x = ds.images.reshape(len(ds), -1).astype(np.float64)
    d2 = (x * x).sum(1)[:, None] - 2.0 * x @ flat.T + (flat * flat).sum(1)[None, :]
    pred = ids[np.argmin(d2, axis=1)]
    return float((pred == ds.labels).mean()) if len(ds) else 0.0
