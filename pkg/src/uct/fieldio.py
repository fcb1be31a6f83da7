"""Portable on-disk array format ("UCTF") plus JSON sidecar metadata.

Layout (little-endian, 32-byte header):

    bytes 0-3    magic "UCTF"
    bytes 4-7    u32 version (currently 1)
    byte  8      u8 dtype: 0 = float32, 1 = float64, 2 = int32
    byte  9      u8 ndim (1..4)
    bytes 10-11  u16 reserved (0)
    bytes 12-27  four u32 dims, unused trailing dims set to 1
    bytes 28-31  reserved (0)
    bytes 32-    row-major payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FieldFormatError, InvalidArgumentError

MAGIC = b"UCTF"
VERSION = 1
HEADER_SIZE = 32
_HEADER = struct.Struct("<4sIBBH4I4x")

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i4"): 2,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_field(path, array) -> None:
    """Write an array (ndim 1..4) to a UCTF file; bit-exact round trip."""
    arr = np.asarray(array)
    if arr.ndim < 1 or arr.ndim > 4:
        raise FieldFormatError(f"array ndim {arr.ndim} not in 1..4")
    if arr.size == 0:
        raise FieldFormatError("empty arrays are not supported")
    dtype = arr.dtype.newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        # normalize common cases (e.g. int64 indices, python floats)
        if np.issubdtype(arr.dtype, np.floating):
            dtype = np.dtype("<f8")
        elif np.issubdtype(arr.dtype, np.integer):
            dtype = np.dtype("<i4")
        else:
            raise FieldFormatError(f"unsupported dtype {arr.dtype}")
    arr = np.ascontiguousarray(arr, dtype=dtype)
    dims = list(arr.shape) + [1] * (4 - arr.ndim)
    header = _HEADER.pack(MAGIC, VERSION, _DTYPE_CODES[dtype], arr.ndim, 0,
                          *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_field(path) -> np.ndarray:
    """Read a UCTF file back into an array."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise FieldFormatError("truncated header", offset=len(header))
        magic, version, dcode, ndim, _res, d0, d1, d2, d3 = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}", offset=0)
        if version != VERSION:
            raise FieldFormatError(f"unsupported version {version}", offset=4)
        if dcode not in _CODE_DTYPES:
            raise FieldFormatError(f"unknown dtype code {dcode}", offset=8)
        if not 1 <= ndim <= 4:
            raise FieldFormatError(f"ndim {ndim} not in 1..4", offset=9)
        dims = (d0, d1, d2, d3)[:ndim]
        if any(d < 1 for d in dims):
            raise FieldFormatError(f"non-positive dims {dims}", offset=12)
        dtype = _CODE_DTYPES[dcode]
        count = int(np.prod(dims))
        payload = fh.read(count * dtype.itemsize + 1)
    if len(payload) < count * dtype.itemsize:
        raise FieldFormatError("truncated payload",
                               offset=HEADER_SIZE + len(payload))
    if len(payload) > count * dtype.itemsize:
        raise FieldFormatError("trailing bytes after payload",
                               offset=HEADER_SIZE + count * dtype.itemsize)
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_sidecar(path, meta: dict) -> None:
    """Write JSON metadata next to a field file (same stem, .json suffix)."""
    if not isinstance(meta, dict):
        raise InvalidArgumentError("sidecar metadata must be a dict")
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path) -> dict:
    with open(sidecar_path(path)) as fh:
        return json.load(fh)


def grid_meta(grid, **extra) -> dict:
    """Standard sidecar entries describing a Grid2D."""
    meta = {"nx": grid.nx, "ny": grid.ny, "dx_mm": grid.dx,
            "origin_mm": list(grid.origin), "units": "mm,us"}
    meta.update(extra)
    return meta
