"""Reader/writer for the portable "UCTF" field files.

This package talks to the image-producing toolkit only through its
on-disk interface, so the format support is self-contained here.

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

from .errors import FieldFormatError

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
    arr = np.ascontiguousarray(array)
    if arr.ndim < 1 or arr.ndim > 4:
        raise FieldFormatError(f"array ndim {arr.ndim} not in 1..4")
    code = _DTYPE_CODES.get(arr.dtype.newbyteorder("<"))
    if code is None:
        raise FieldFormatError(f"unsupported dtype {arr.dtype}")
    dims = list(arr.shape) + [1] * (4 - arr.ndim)
    header = _HEADER.pack(MAGIC, VERSION, code, arr.ndim, 0, *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise FieldFormatError("file shorter than the header")
    magic, version, code, ndim, _res, d0, d1, d2, d3 = \
        _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError("bad magic")
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    if code not in _CODE_DTYPES or not 1 <= ndim <= 4:
        raise FieldFormatError("bad dtype or ndim")
    shape = (d0, d1, d2, d3)[:ndim]
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = raw[HEADER_SIZE:]
    if len(payload) != expected:
        raise FieldFormatError("payload size mismatch")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def read_sidecar(path) -> dict:
    """JSON metadata stored next to a field file (same stem, .json)."""
    with open(Path(path).with_suffix(".json")) as fh:
        return json.load(fh)
