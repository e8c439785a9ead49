"""Named-tensor binary container shared by weight files ("APTW") and prompt
snapshots.

Layout, little-endian::

    magic 4 bytes | version u32 | tensor_count u32
    per tensor: name_len u16 | UTF-8 name | rank u8 | dims u32 * rank | f32 data
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from src.aptlab.errors import (
    BadMagicError,
    SerializationError,
    TruncatedFileError,
    VersionMismatchError,
)

WEIGHTS_MAGIC = b"APTW"
FORMAT_VERSION = 1


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated while reading {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def write_container(path: Path | str, tensors: dict[str, np.ndarray], magic: bytes = WEIGHTS_MAGIC) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF or arr.ndim > 0xFF:
                raise SerializationError(f"tensor '{name}' cannot be encoded")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_container(path: Path | str, magic: bytes = WEIGHTS_MAGIC) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        head = _read_exact(f, len(magic), "magic")
        if head != magic:
            raise BadMagicError(f"{path}: expected magic {magic!r}, got {head!r}")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
            )
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, f"rank of {name}"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"dims of {name}"))
            n = int(np.prod(dims, dtype=np.int64))
            data = np.frombuffer(_read_exact(f, 4 * n, f"data of {name}"), dtype="<f4")
            out[name] = data.astype(np.float32).reshape(dims)
    return out
