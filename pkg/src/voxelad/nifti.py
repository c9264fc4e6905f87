"""Single-file NIfTI-1 reader/writer for the documented subset.

Subset contract:
  * uncompressed .nii only (no .hdr/.img pairs, no gzip)
  * header length 348, magic "n+1\\0" at offset 344, vox_offset 352.0
  * little-endian throughout
  * datatype 16 (float32) for volumes / score maps, 2 (uint8) for masks
  * dim[0] of 4 -> multi-channel volume (4th dimension = channels),
    dim[0] of 3 with datatype 16 -> score map, with datatype 2 -> mask

Orientation and affine header fields (qform/sform/descrip/...) are carried
through verbatim on round-trip but never interpreted; scl_slope/scl_inter
are likewise ignored. On-disk payload order is the NIfTI one (x fastest,
then y, z, channel); it is transposed to the channel-major in-memory layout.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grids import HeadMask, MultiChannelVolume, ScoreMap

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\0"

DT_UINT8 = 2
DT_FLOAT32 = 16

# field -> (byte offset, struct format) for everything this subset owns
_FIELDS = {
    "sizeof_hdr": (0, "<i"),
    "dim": (40, "<8h"),
    "datatype": (70, "<h"),
    "bitpix": (72, "<h"),
    "pixdim": (76, "<8f"),
    "vox_offset": (108, "<f"),
    "scl_slope": (112, "<f"),
    "scl_inter": (116, "<f"),
    "xyzt_units": (123, "<B"),
    "magic": (344, "<4s"),
}


class NiftiFormatError(ValueError):
    """File violates the NIfTI-1 subset this toolkit reads and writes."""


def _unpack(header: bytes, name: str):
    off, fmt = _FIELDS[name]
    vals = struct.unpack_from(fmt, header, off)
    return vals if len(vals) > 1 else vals[0]


def _pack_into(buf: bytearray, name: str, *values):
    off, fmt = _FIELDS[name]
    struct.pack_into(fmt, buf, off, *values)


def _build_header(
    base: bytes | None,
    dims: tuple[int, int, int],
    n_channels: int,
    spacing,
    datatype: int,
) -> bytes:
    buf = bytearray(base) if base is not None else bytearray(HEADER_SIZE)
    if len(buf) != HEADER_SIZE:
        raise NiftiFormatError(f"carried header has wrong size {len(buf)}")
    ndim = 4 if n_channels > 0 else 3
    dim = [ndim, dims[0], dims[1], dims[2], max(n_channels, 1), 1, 1, 1]
    if ndim == 3:
        dim[4] = 1
    _pack_into(buf, "sizeof_hdr", HEADER_SIZE)
    _pack_into(buf, "dim", *dim)
    _pack_into(buf, "datatype", datatype)
    _pack_into(buf, "bitpix", 8 if datatype == DT_UINT8 else 32)
    _pack_into(buf, "pixdim", 1.0, spacing[0], spacing[1], spacing[2], 1.0, 0.0, 0.0, 0.0)
    _pack_into(buf, "vox_offset", float(VOX_OFFSET))
    _pack_into(buf, "scl_slope", 1.0)
    _pack_into(buf, "scl_inter", 0.0)
    if base is None:
        _pack_into(buf, "xyzt_units", 2)  # millimetres
    _pack_into(buf, "magic", MAGIC)
    return bytes(buf)


def read_volume(path: str | Path) -> MultiChannelVolume | HeadMask:
    """Read one .nii file from the subset.

    datatype 16 yields a MultiChannelVolume (a 3-D file becomes S=1),
    datatype 2 yields a HeadMask.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"{path}: file shorter than a NIfTI-1 header")
    header = raw[:HEADER_SIZE]

    if _unpack(header, "magic") != MAGIC:
        raise NiftiFormatError(f"{path}: not a NIfTI-1 file (bad magic)")
    if _unpack(header, "sizeof_hdr") != HEADER_SIZE:
        raise NiftiFormatError(f"{path}: not a NIfTI-1 file (sizeof_hdr != 348)")

    dim = _unpack(header, "dim")
    ndim = dim[0]
    if ndim not in (3, 4):
        raise NiftiFormatError(f"{path}: unsupported dimension count {ndim} (need 3 or 4)")
    nx, ny, nz = dim[1], dim[2], dim[3]
    nt = dim[4] if ndim == 4 else 1
    if min(nx, ny, nz, nt) < 1:
        raise NiftiFormatError(f"{path}: non-positive dims {dim[1:5]}")
    if any(d > 1 for d in dim[5:8]):
        raise NiftiFormatError(f"{path}: dims beyond the 4th are not supported")

    datatype = _unpack(header, "datatype")
    if datatype not in (DT_UINT8, DT_FLOAT32):
        raise NiftiFormatError(f"{path}: unsupported datatype code {datatype}")

    vox_offset = int(_unpack(header, "vox_offset"))
    if vox_offset != VOX_OFFSET:
        raise NiftiFormatError(f"{path}: unsupported vox_offset {vox_offset} (need 352)")

    itemsize = 1 if datatype == DT_UINT8 else 4
    n_values = nx * ny * nz * nt
    expected = vox_offset + n_values * itemsize
    if len(raw) != expected:
        raise NiftiFormatError(
            f"{path}: payload length disagrees with dims "
            f"(file has {len(raw)} bytes, dims require {expected})"
        )

    dtype = np.dtype("<u1") if datatype == DT_UINT8 else np.dtype("<f4")
    flat = np.frombuffer(raw, dtype=dtype, count=n_values, offset=vox_offset)
    # disk order: x fastest, then y, z, channel
    arr = flat.reshape(nt, nz, ny, nx).transpose(0, 3, 2, 1)

    pixdim = _unpack(header, "pixdim")
    spacing = (pixdim[1], pixdim[2], pixdim[3])

    if datatype == DT_UINT8:
        if nt != 1:
            raise NiftiFormatError(f"{path}: multi-channel masks are not supported")
        return HeadMask(arr[0] != 0, spacing=spacing if min(spacing) > 0 else (1.0, 1.0, 1.0),
                        header=header)

    if min(spacing) <= 0:
        raise NiftiFormatError(f"{path}: non-positive voxel spacing {spacing}")
    data = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.isfinite(data).all():
        raise NiftiFormatError(f"{path}: payload contains non-finite values")
    return MultiChannelVolume(data, spacing=spacing, header=header)


def read_mask(path: str | Path) -> HeadMask:
    obj = read_volume(path)
    if not isinstance(obj, HeadMask):
        raise NiftiFormatError(f"{path}: expected a mask file (datatype 2)")
    return obj


def read_score_map(path: str | Path) -> ScoreMap:
    """Read a score-map file: single-channel float volume, all values >= 0."""
    obj = read_volume(path)
    if not isinstance(obj, MultiChannelVolume) or obj.channels != 1:
        raise NiftiFormatError(f"{path}: expected a single-channel float file")
    data = obj.data[0]
    if (data < 0).any():
        raise NiftiFormatError(f"{path}: score map contains negative values")
    return ScoreMap(data, spacing=obj.spacing, header=obj.header)


def write_volume(vol: MultiChannelVolume | HeadMask | ScoreMap, path: str | Path):
    """Write one grid object as a single uncompressed .nii file."""
    path = Path(path)
    if isinstance(vol, MultiChannelVolume):
        data = vol.data
        if not np.isfinite(data).all():
            raise ValueError("refusing to write non-finite volume data")
        payload = np.ascontiguousarray(
            data.transpose(0, 3, 2, 1), dtype="<f4"
        ).tobytes()
        header = _build_header(vol.header, vol.dims, vol.channels, vol.spacing, DT_FLOAT32)
    elif isinstance(vol, ScoreMap):
        data = vol.data
        if not np.isfinite(data).all():
            raise ValueError("refusing to write non-finite score map data")
        payload = np.ascontiguousarray(data.transpose(2, 1, 0), dtype="<f4").tobytes()
        header = _build_header(vol.header, vol.dims, 0, vol.spacing, DT_FLOAT32)
    elif isinstance(vol, HeadMask):
        payload = np.ascontiguousarray(
            vol.data.transpose(2, 1, 0), dtype="<u1"
        ).tobytes()
        header = _build_header(vol.header, vol.dims, 0, vol.spacing, DT_UINT8)
    else:
        raise TypeError(f"cannot write object of type {type(vol).__name__}")

    pad = b"\0" * (VOX_OFFSET - HEADER_SIZE)
    path.write_bytes(header + pad + payload)
