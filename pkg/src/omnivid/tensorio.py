"""TOMN tensor container.

Layout (all little-endian)::

    b"TOMN" | version:u16 | rank:u8 | dims:u32 * rank | payload

The payload is row-major float32. Boolean masks use the same header with a
u8 payload; readers tell the two apart by payload length.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TOMN"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def to_bytes(array) -> bytes:
    arr = np.asarray(array)
    if arr.ndim > 255:
        raise TensorFormatError(f"rank {arr.ndim} exceeds u8")
    if arr.dtype == np.bool_ or arr.dtype == np.uint8:
        payload = np.ascontiguousarray(arr, dtype=np.uint8).tobytes()
    else:
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    header = MAGIC + struct.pack("<HB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + payload


def from_bytes(blob: bytes, *, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise TensorFormatError(f"{source}: bad magic")
    version, rank = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise TensorFormatError(f"{source}: unsupported version {version}")
    off = 7 + 4 * rank
    if len(blob) < off:
        raise TensorFormatError(f"{source}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    count = int(np.prod(dims, dtype=np.int64))
    n = len(blob) - off
    if n == 4 * count:
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).astype(np.float32)
    elif n == count:
        arr = np.frombuffer(blob, dtype=np.uint8, count=count, offset=off).copy()
    else:
        raise TensorFormatError(
            f"{source}: payload of {n} bytes does not fit dims {tuple(dims)}"
        )
    return arr.reshape(dims)


def save(path, array) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(array))
    os.replace(tmp, path)


def load(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"tensor file not found: {path}")
    return from_bytes(path.read_bytes(), source=str(path))


def load_mask(path) -> np.ndarray:
    arr = load(path)
    if arr.dtype != np.uint8:
        raise TensorFormatError(f"{path}: expected u8 mask payload")
    return arr.astype(bool)


def digest(array) -> str:
    """sha256 of the container encoding; stable across processes."""
    return hashlib.sha256(to_bytes(array)).hexdigest()
