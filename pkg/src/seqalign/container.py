"""Binary tensor container used for checkpoints, sequences, and embeddings.

Layout (all integers little-endian):

    magic     4 bytes  b"MASA"
    version   u16      currently 1
    count     u32      number of tensors
    per tensor:
        name_len  u16
        name      UTF-8 bytes
        rank      u8
        dims      u32 * rank   (each positive)
        payload   f32 * prod(dims), row-major

Tensors keep their write order. Read errors carry the byte offset of the
first defect so corrupted files can be diagnosed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"MASA"
VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


def write_container(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float32 tensors to ``path``, preserving dict order."""
    chunks = [MAGIC, _U16.pack(VERSION), _U32.pack(len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        arr = np.asarray(array, dtype="<f4")
        if arr.ndim > 0:
            # ascontiguousarray would silently promote rank-0 to rank-1
            arr = np.ascontiguousarray(arr)
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor rank {arr.ndim} exceeds container limit")
        if any(d <= 0 for d in arr.shape):
            raise ValueError(f"tensor {name!r} has a non-positive dimension: {arr.shape}")
        chunks.append(_U16.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            chunks.append(_U32.pack(d))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise ContainerFormatError(
                f"truncated container: expected {n} bytes for {what}", self.offset
            )
        piece = self.blob[self.offset : self.offset + n]
        self.offset += n
        return piece

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def _read_entries(blob: bytes, with_payload: bool):
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise ContainerFormatError("bad magic bytes", 0)
    version_offset = r.offset
    version = r.u16("version")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}", version_offset)
    count = r.u32("tensor count")
    entries: dict[str, np.ndarray | tuple] = {}
    for _ in range(count):
        name_len = r.u16("name length")
        name_offset = r.offset
        raw_name = r.take(name_len, "name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise ContainerFormatError("tensor name is not valid UTF-8", name_offset) from None
        if name in entries:
            raise ContainerFormatError(f"duplicate tensor name {name!r}", name_offset)
        rank = r.u8("rank")
        dims = []
        for _ in range(rank):
            dim_offset = r.offset
            d = r.u32("dimension")
            if d == 0:
                raise ContainerFormatError(f"zero dimension in tensor {name!r}", dim_offset)
            dims.append(d)
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if with_payload:
            payload = r.take(4 * size, f"payload of {name!r}")
            arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
            entries[name] = arr
        else:
            if r.offset + 4 * size > len(blob):
                raise ContainerFormatError(
                    f"truncated container: expected {4 * size} bytes for payload of {name!r}",
                    r.offset,
                )
            r.offset += 4 * size
            entries[name] = tuple(dims)
    if r.offset != len(blob):
        raise ContainerFormatError("trailing bytes after last tensor", r.offset)
    return entries


def read_container(path) -> dict[str, np.ndarray]:
    """Read all tensors; raises ContainerFormatError with a byte offset."""
    return _read_entries(Path(path).read_bytes(), with_payload=True)


def read_container_shapes(path) -> dict[str, tuple]:
    """Read tensor names and shapes without materializing payloads."""
    return _read_entries(Path(path).read_bytes(), with_payload=False)
