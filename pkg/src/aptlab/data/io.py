"""APTD dataset files, little-endian::

    "APTD" | version u32 | n_samples u32 | height u16 | width u16 | channels u16 | n_classes u16
    per sample: label u16 | H*W*C f32 pixels (row-major, channels last)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from src.aptlab.data.synth import Dataset
from src.aptlab.errors import BadMagicError, SerializationError, TruncatedFileError, VersionMismatchError

DATASET_MAGIC = b"APTD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIHHHH")


def _record_dtype(pixels: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("pixels", "<f4", (pixels,))])


def write_dataset(ds: Dataset, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, (c, h, w) = len(ds), ds.image_shape
    if max(h, w, c, ds.n_classes) > 0xFFFF:
        raise SerializationError("write_dataset: geometry does not fit the u16 header fields")
    records = np.empty(n, dtype=_record_dtype(h * w * c))
    records["label"] = ds.labels
    records["pixels"] = ds.images.transpose(0, 2, 3, 1).reshape(n, -1)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, n, h, w, c, ds.n_classes))
        f.write(records.tobytes())


def read_dataset(path: Path | str, split: str = "") -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < len(DATASET_MAGIC):
        raise TruncatedFileError(f"{path}: file truncated inside the magic ({len(raw)} bytes)")
    if raw[:4] != DATASET_MAGIC:
        raise BadMagicError(f"{path}: expected magic {DATASET_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(raw)} bytes)")
    _, version, n, h, w, c, n_classes = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    rec = _record_dtype(h * w * c)
    body = raw[_HEADER.size:]
    if len(body) < n * rec.itemsize:
        raise TruncatedFileError(
            f"{path}: expected {n} samples ({n * rec.itemsize} bytes), got {len(body)} bytes"
        )
    records = np.frombuffer(body, dtype=rec, count=n)
    images = records["pixels"].astype(np.float32).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    return Dataset(
        np.ascontiguousarray(images),
        records["label"].astype(np.int64),
        int(n_classes),
        split or Path(path).stem,
    )
