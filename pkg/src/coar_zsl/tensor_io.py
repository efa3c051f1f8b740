"""Binary tensor file format.

Layout: magic ``COAR`` | u8 rank (<= 4) | rank x u32 little-endian dims |
u8 dtype tag (0: f32, 1: f64, 2: i32) | row-major little-endian payload.
Write-then-read round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"COAR"
MAX_RANK = 4

_TAG_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4")}
_DTYPE_TO_TAG = {np.dtype(np.float32): 0, np.dtype(np.float64): 1,
                 np.dtype(np.int32): 2}


class TensorIOError(Exception):
    """Base error for tensor file I/O."""


class BadMagicError(TensorIOError):
    pass


class DimOverflowError(TensorIOError):
    pass


class TruncatedPayloadError(TensorIOError):
    pass


def write_tensor(path, tensor) -> None:
    arr = np.asarray(tensor)
    try:
        tag = _DTYPE_TO_TAG[arr.dtype]
    except KeyError:
        raise TensorIOError(f"unsupported dtype {arr.dtype}") from None
    if arr.ndim > MAX_RANK:
        raise DimOverflowError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
    for d in arr.shape:
        if d > 0xFFFFFFFF:
            raise DimOverflowError(f"dimension {d} does not fit in u32")
    header = MAGIC + struct.pack("<B", arr.ndim)
    header += b"".join(struct.pack("<I", d) for d in arr.shape)
    header += struct.pack("<B", tag)
    payload = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 5:
        raise TruncatedPayloadError(f"{path}: missing rank byte")
    rank = raw[4]
    if rank > MAX_RANK:
        raise DimOverflowError(f"{path}: rank {rank} exceeds maximum {MAX_RANK}")
    header_len = 5 + 4 * rank + 1
    if len(raw) < header_len:
        raise TruncatedPayloadError(f"{path}: truncated header")
    dims = struct.unpack(f"<{rank}I", raw[5:5 + 4 * rank]) if rank else ()
    tag = raw[header_len - 1]
    try:
        dtype = _TAG_TO_DTYPE[tag]
    except KeyError:
        raise TensorIOError(f"{path}: unknown dtype tag {tag}") from None
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = count * dtype.itemsize
    body = raw[header_len:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(body)} bytes, expected {expected}")
    if len(body) > expected:
        raise TensorIOError(f"{path}: {len(body) - expected} trailing bytes")
    return np.frombuffer(body, dtype=dtype).reshape(dims).copy()
