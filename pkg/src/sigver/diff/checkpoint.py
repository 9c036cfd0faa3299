"""Checkpoint files: JSON manifest followed by a float32 payload.

Layout::

    b"SVCK" | uint32 version | uint64 manifest bytes | manifest (UTF-8 JSON) | payload

The manifest is a JSON array of ``{name, shape, dtype, byte_offset}``; offsets
are relative to the start of the payload, which is little-endian float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..signature_io import atomic_write_bytes

MAGIC = b"SVCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(np.shape(arr)), "dtype": "float32",
                         "byte_offset": offset})
        chunks.append(data)
        offset += len(data)
    head = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(chunks)


def loads(payload: bytes) -> dict[str, np.ndarray]:
    if len(payload) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint")
    magic, version, n = _PREFIX.unpack_from(payload)
    if magic != MAGIC or version != VERSION:
        raise CheckpointError("not a checkpoint file (bad magic/version)")
    manifest = json.loads(payload[_PREFIX.size:_PREFIX.size + n].decode("utf-8"))
    base = _PREFIX.size + n
    out = {}
    for entry in manifest:
        if entry["dtype"] != "float32":
            raise CheckpointError(f"unsupported dtype {entry['dtype']}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=base + entry["byte_offset"])
        out[entry["name"]] = arr.reshape(shape).astype(np.float32)
    return out


def save(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(Path(path), dumps(arrays))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
