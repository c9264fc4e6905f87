"""Minimal NIfTI-1 I/O for the shared exchange subset.

Deliberately self-contained: this package talks to the detector toolkit
through files only. Subset: single uncompressed .nii, little-endian,
header 348 bytes with magic "n+1\\0", vox_offset 352, datatype 16
(float32, dim[0] 4 = channels-last-dim volume / 3 = scalar map) or 2
(uint8 mask).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\0"


def read_channels(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a float volume as (S, X, Y, Z) (S=1 for 3-D files) plus spacing."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE or raw[344:348] != MAGIC:
        raise ValueError(f"{path}: not a NIfTI-1 file")
    dim = struct.unpack_from("<8h", raw, 40)
    datatype = struct.unpack_from("<h", raw, 70)[0]
    ndim = dim[0]
    if ndim not in (3, 4):
        raise ValueError(f"{path}: unsupported dimension count {ndim}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    nt = dim[4] if ndim == 4 else 1
    n = nx * ny * nz * nt
    if datatype == 16:
        itemsize, dtype = 4, "<f4"
    elif datatype == 2:
        itemsize, dtype = 1, "<u1"
    else:
        raise ValueError(f"{path}: unsupported datatype {datatype}")
    if len(raw) < VOX_OFFSET + n * itemsize:
        raise ValueError(f"{path}: truncated payload")
    arr = np.frombuffer(raw, dtype=dtype, count=n, offset=VOX_OFFSET).astype(np.float32)
    pixdim = struct.unpack_from("<8f", raw, 76)
    data = arr.reshape(nt, nz, ny, nx).transpose(0, 3, 2, 1)
    return np.ascontiguousarray(data, dtype=np.float32), (pixdim[1], pixdim[2], pixdim[3])


def read_mask(path: str | Path) -> np.ndarray:
    data, _ = read_channels(path)
    if data.shape[0] != 1:
        raise ValueError(f"{path}: expected a single-channel mask")
    return data[0] != 0


def write_scalar_map(data: np.ndarray, path: str | Path, spacing=(1.0, 1.0, 1.0)):
    """Write one 3-D float32 map (datatype 16, dim[0] 3)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 3:
        raise ValueError(f"scalar map must be 3-D, got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("refusing to write non-finite data")
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, 16)
    struct.pack_into("<h", header, 72, 32)
    struct.pack_into("<8f", header, 76, 1.0, spacing[0], spacing[1], spacing[2], 1.0, 0, 0, 0)
    struct.pack_into("<f", header, 108, float(VOX_OFFSET))
    struct.pack_into("<f", header, 112, 1.0)
    struct.pack_into("<B", header, 123, 2)  # millimetres
    struct.pack_into("<4s", header, 344, MAGIC)
    payload = np.ascontiguousarray(data.transpose(2, 1, 0), dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(header) + b"\0" * (VOX_OFFSET - HEADER_SIZE) + payload)
