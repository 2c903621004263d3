"""Binary tensor files for pre-extracted features ("EMIF" format).

Layout, little-endian throughout:

    magic   4 bytes  b"EMIF"
    version u8       1
    dtype   u8       1 (float32)
    rank    u8
    reserved u8      0
    dims    rank x u32
    payload row-major float32

One file per (sample, modality). Write/read round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"EMIF"
VERSION = 1
DTYPE_F32 = 1
MAX_RANK = 8
# Guards against corrupt dims fields allocating absurd buffers.
MAX_ELEMENTS = 1 << 31


def write_feature_file(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.float32))
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise FormatError(f"rank: cannot encode rank-{arr.ndim} tensor")
    header = MAGIC + struct.pack("<BBBB", VERSION, DTYPE_F32, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes(order="C"))


def read_feature_file(path: str | Path) -> np.ndarray:
    """Read a feature file, validating every header field before the payload."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8:
        raise FormatError(f"{path.name}: header: file truncated at {len(blob)} bytes")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path.name}: magic: expected {MAGIC!r}, got {blob[:4]!r}")
    version, dtype, rank, reserved = struct.unpack("<BBBB", blob[4:8])
    if version != VERSION:
        raise FormatError(f"{path.name}: version: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path.name}: dtype: unsupported dtype code {dtype}")
    if rank < 1 or rank > MAX_RANK:
        raise FormatError(f"{path.name}: rank: {rank} outside [1, {MAX_RANK}]")
    if reserved != 0:
        raise FormatError(f"{path.name}: reserved: expected 0, got {reserved}")
    dims_end = 8 + 4 * rank
    if len(blob) < dims_end:
        raise FormatError(f"{path.name}: dims: file truncated inside dimension list")
    dims = struct.unpack(f"<{rank}I", blob[8:dims_end])
    if any(d == 0 for d in dims):
        raise FormatError(f"{path.name}: dims: zero-sized dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise FormatError(f"{path.name}: dims: element count overflow in {dims}")
    payload = blob[dims_end:]
    expected = 4 * count
    if len(payload) != expected:
        raise FormatError(
            f"{path.name}: payload: expected {expected} bytes for shape {dims}, got {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    return flat.reshape(dims).copy()
