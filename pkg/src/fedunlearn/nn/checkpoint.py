"""Versioned model checkpoint container.

Layout, all integers little-endian:

    8 bytes   magic "FEDUNCKP"
    uint32    format version (currently 1)
    uint32    byte length of the architecture JSON
    ...       architecture JSON, UTF-8
    uint64    weight count
    ...       weights as little-endian float32, flat order

Round-trips are bit-exact for float32 weights; other dtypes are cast to
float32 on save.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .arch import arch_from_dict, arch_to_dict
from .network import ModelParams

MAGIC = b"FEDUNCKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or unreadable checkpoint file."""


def save_checkpoint(path, model: ModelParams) -> None:
    path = Path(path)
    arch_json = json.dumps(arch_to_dict(model.arch), separators=(",", ":")).encode("utf-8")
    weights = np.ascontiguousarray(model.weights, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(arch_json)))
        fh.write(arch_json)
        fh.write(struct.pack("<Q", weights.shape[0]))
        fh.write(weights.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint: expected {n} bytes of {what}, got {len(data)}")
    return data


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(MAGIC), "magic")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a model checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (arch_len,) = struct.unpack("<I", _read_exact(fh, 4, "architecture length"))
        try:
            arch = arch_from_dict(json.loads(_read_exact(fh, arch_len, "architecture").decode("utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CheckpointError(f"unreadable architecture block: {exc}") from exc
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "weight count"))
        raw = _read_exact(fh, 4 * count, "weights")
        trailing = fh.read(1)
    if trailing:
        raise CheckpointError("trailing bytes after weight block")
    weights = np.frombuffer(raw, dtype="<f4").copy()
    return ModelParams(arch, weights)
