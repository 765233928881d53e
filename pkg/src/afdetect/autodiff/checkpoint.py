"""Checkpoint container.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"AFDCKPT\\0"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length H in bytes
    offset 20  H bytes   UTF-8 JSON header
    offset 20+H          payload: float64 little-endian values, concatenated

The header holds ``"meta"`` (free-form JSON, e.g. the architecture
descriptor) and ``"tensors"``: a list of ``{"name", "shape", "offset",
"count"}`` records where ``offset`` and ``count`` are in float64 elements
from the start of the payload.  Names are slash paths such as
``param/stem.conv.weight`` or ``adam.m/head.weight``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"AFDCKPT\x00"
VERSION = 1


def encode(tensors: dict, meta: dict | None = None) -> bytes:
    records, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8")  # tobytes() below is C order; keeps 0-d shapes
        records.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"meta": meta or {}, "tensors": records}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def decode(raw: bytes):
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise CheckpointError("not an afdetect checkpoint")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[20:20 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    body = raw[20 + hlen:]
    payload = np.frombuffer(body[:len(body) - len(body) % 8], dtype="<f8")
    tensors = {}
    for rec in header["tensors"]:
        end = rec["offset"] + rec["count"]
        if end > payload.size:
            raise CheckpointError(f"truncated payload for {rec['name']}")
        tensors[rec["name"]] = payload[rec["offset"]:end].reshape(rec["shape"]).copy()
    return tensors, header["meta"]


def save(path, tensors: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode(tensors, meta))


def load(path):
    """Return ``(tensors, meta)``."""
    return decode(Path(path).read_bytes())
