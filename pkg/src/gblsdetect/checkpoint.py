"""Binary checkpoint container of named float64 tensors.

Layout (all integers little-endian)::

    b"GBLSCKPT"            magic
    u32 version
    u32 len, utf-8 digest  config digest
    u32 count
    count x record:
        u32 len, utf-8 name
        u32 rank
        rank x u64 dims
        prod(dims) x f64   row-major payload
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"GBLSCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(tensors: Mapping[str, np.ndarray], digest: str) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(digest), struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("invalid utf-8 in checkpoint") from exc


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], str]:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a GBLS checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = r.string()
    out: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"non-finite values in tensor {name!r}")
        out[name] = arr
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint records")
    return out, digest


def save(path: str | Path, tensors: Mapping[str, np.ndarray], digest: str) -> None:
    Path(path).write_bytes(dumps(tensors, digest))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], str]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(buf)
