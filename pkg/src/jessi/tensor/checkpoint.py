"""Flat named-tensor container.

Layout (all integers unsigned 32-bit little-endian)::

    b"JESSI1"
    repeated until EOF:
        name length, UTF-8 name bytes
        rank, extents[rank]
        float32 little-endian values, row-major

Metadata (architecture, vocabulary, ...) travels as a JSON document stored
byte-per-value in a rank-1 entry named ``__meta__``.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Mapping

import numpy as np

MAGIC = b"JESSI1"
META_KEY = "__meta__"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    entries = dict(tensors)
    if meta is not None:
        if META_KEY in entries:
            raise CheckpointError(f"tensor name {META_KEY!r} is reserved")
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        entries = {META_KEY: np.frombuffer(blob, dtype=np.uint8).astype("<f4"), **entries}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in entries.items():
            arr = np.asarray(arr)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict | None]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(MAGIC):
        raise CheckpointError(f"{path}: missing JESSI1 header")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        out[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    meta = None
    if META_KEY in out:
        meta = json.loads(out.pop(META_KEY).astype(np.uint8).tobytes().decode("utf-8"))
    return out, meta
