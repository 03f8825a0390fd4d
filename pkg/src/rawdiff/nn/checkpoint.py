"""Versioned named-tensor container.

Layout (little-endian): magic ``DRCK``, version u16, tensor count u32, then
per tensor: name length u16, UTF-8 name, rank u32, rank x u32 dims, float32 data.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"DRCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(tensors: dict, path) -> None:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, t in tensors.items():
        arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f4")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> dict:
    raw = Path(path).read_bytes()

    def need(pos, n):
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")

    need(0, 10)
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    pos, out = 10, {}
    for _ in range(count):
        need(pos, 2)
        (klen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        need(pos, klen + 4)
        name = raw[pos:pos + klen].decode("utf-8")
        pos += klen
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(pos, 4 * rank)
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        need(pos, nbytes)
        out[name] = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return out


def load_into(params: dict, tensors: dict, strict: bool = True) -> None:
    """Copy ``tensors`` into the Tensors of ``params`` (name -> Tensor)."""
    for name, p in params.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        arr = tensors[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"tensor {name!r}: checkpoint shape {arr.shape}, model shape {p.shape}")
        p.data = arr.astype(p.dtype, copy=True)
    if strict:
        extra = sorted(set(tensors) - set(params))
        if extra:
            raise CheckpointError(f"unknown tensor name(s) in checkpoint: {', '.join(extra)}")
