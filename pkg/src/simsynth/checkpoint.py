"""Binary checkpoint container.

Layout (all integers little-endian):

    8 bytes   magic ``b"SIMSYNC1"``
    u32       format version
    u32       config byte length, then UTF-8 JSON config
    u32       tensor count, then per tensor:
                  u16 name length + UTF-8 name
                  u8 rank, u32 per dimension
                  raw little-endian float64 data
    8 bytes   blake2b-64 checksum of every preceding byte

The checksum is verified before any content is parsed, so a truncated or
corrupt file never yields a partial load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointChecksumError, CheckpointError, CheckpointVersionError

MAGIC = b"SIMSYNC1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Config snapshot plus a named float64 tensor table.

    ``config`` carries the structural metadata (architecture, epoch counter,
    optimizer step, class-stats hash); ``tensors`` carries weights, optimizer
    moments, and the loss history, keyed by dotted names.
    """

    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _checksum(blob: bytes) -> bytes:
    return hashlib.blake2b(blob, digest_size=8).digest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<I", ckpt.version)]
    config_bytes = json.dumps(ckpt.config, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(config_bytes)))
    parts.append(config_bytes)
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    blob = b"".join(parts)
    Path(path).write_bytes(blob + _checksum(blob))


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 8:
        raise CheckpointChecksumError(f"{path}: file too short to be a checkpoint")
    blob, digest = raw[:-8], raw[-8:]
    if _checksum(blob) != digest:
        raise CheckpointChecksumError(f"{path}: checksum mismatch (corrupt or truncated file)")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    off = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: unexpected end of data")
        chunk = blob[off : off + n]
        off += n
        return chunk

    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    (config_len,) = struct.unpack("<I", take(4))
    config = json.loads(take(config_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        tensors[name] = data.astype(np.float64).copy()
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes after tensor table")
    return Checkpoint(config=config, tensors=tensors, version=version)
