"""Portable checkpoint format.

Layout (all integers little-endian)::

    b"MCSFQF01"                      magic + two-digit format version
    u32  tensor count
    u64  metadata length in bytes
    per tensor: u32 name length, UTF-8 name, u32 rank, rank x u32 dims
    tensor data: float32, row-major, in table order
    metadata: UTF-8 JSON object (RNG state, step, optimiser scalars, config)

The header alone fixes the tensor count and the total file length.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "CheckpointError", "encode_checkpoint", "decode_checkpoint",
           "save_checkpoint", "load_checkpoint", "checkpoint_size"]

PREFIX = b"MCSFQF"
VERSION = 1
MAGIC = PREFIX + b"%02d" % VERSION
_MAX_DIM = 2 ** 32 - 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(tensors: dict, meta: dict) -> bytes:
    """Serialise ``tensors`` (stored as float32) and JSON-able ``meta``."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    head = [MAGIC, struct.pack("<IQ", len(tensors), len(meta_bytes))]
    body = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        if any(d > _MAX_DIM for d in arr.shape):
            raise CheckpointError(f"dimension overflow: {name!r} has shape {arr.shape}")
        raw = name.encode()
        head.append(struct.pack("<I", len(raw)) + raw + struct.pack("<I", arr.ndim)
                    + struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(arr.tobytes())
    return b"".join(head + body + [meta_bytes])


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes for {what} at offset {self.pos}, "
                                  f"have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_header(r: _Reader):
    magic = r.take(len(MAGIC), "magic")
    if magic[:len(PREFIX)] != PREFIX or not magic[len(PREFIX):].isdigit():
        raise CheckpointError(f"bad magic {magic!r}")
    version = int(magic[len(PREFIX):])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    count, meta_len = r.unpack("<IQ", "header")
    table = []
    for i in range(count):
        (n,) = r.unpack("<I", f"name length of tensor {i}")
        try:
            name = r.take(n, f"name of tensor {i}").decode()
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor {i} name is not valid UTF-8") from None
        (rank,) = r.unpack("<I", f"rank of {name!r}")
        if rank > 32:
            raise CheckpointError(f"dimension overflow: {name!r} declares rank {rank}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        table.append((name, dims))
    return table, meta_len


def checkpoint_size(header: bytes) -> tuple[int, int]:
    """``(tensor count, total byte length)`` computed from the header bytes alone."""
    r = _Reader(header)
    table, meta_len = _read_header(r)
    data = sum(4 * int(np.prod(d, dtype=object)) for _, d in table)
    return len(table), r.pos + data + meta_len


def decode_checkpoint(buf: bytes) -> tuple[dict, dict]:
    r = _Reader(buf)
    table, meta_len = _read_header(r)
    tensors = {}
    for name, dims in table:
        n = int(np.prod(dims, dtype=object))
        if 4 * n > len(buf) - r.pos:
            raise CheckpointError(f"dimension overflow: {name!r} with dims {dims} exceeds the file "
                                  f"({len(buf) - r.pos} bytes left)")
        data = r.take(4 * n, f"data of {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)
    meta_raw = r.take(meta_len, "metadata")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after metadata")
    try:
        meta = json.loads(meta_raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt metadata: {e}") from None
    return tensors, meta


def save_checkpoint(path, tensors: dict, meta: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors, meta))


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
