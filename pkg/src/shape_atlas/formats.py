"""Binary file formats: SATL atlas files and the plane-permutation cache.

SATL layout (all integers little-endian u32)::

    offset  size  field
    0       4     magic b"SATL"
    4       4     version (1)
    8       4     height
    12      4     width
    16      4     channels
    20      4     dtype tag (0 = float32 LE)
    24      16    lattice id
    40      ...   payload, row-major, channels interleaved per pixel

Permutation cache layout::

    0   4   magic b"SPRM"
    4   4   version (1)
    8   4   n
    12  16  lattice id
    28  4n  u32 grid cell (row * side + col) of every sphere point
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

SATL_MAGIC = b"SATL"
SATL_VERSION = 1
DTYPE_FLOAT32 = 0
_SATL_HEADER = struct.Struct("<4sIIIII16s")

PERM_MAGIC = b"SPRM"
PERM_VERSION = 1
_PERM_HEADER = struct.Struct("<4sII16s")


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_satl(data: np.ndarray, lattice_id: bytes) -> bytes:
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValueError("atlas payload must be (height, width, channels)")
    if len(lattice_id) != 16:
        raise ValueError("lattice id must be 16 bytes")
    h, w, c = data.shape
    header = _SATL_HEADER.pack(SATL_MAGIC, SATL_VERSION, h, w, c, DTYPE_FLOAT32, lattice_id)
    return header + np.ascontiguousarray(data, dtype="<f4").tobytes()


def decode_satl(buf: bytes):
    """Return ``(payload float32 array, lattice_id)``."""
    if len(buf) < _SATL_HEADER.size:
        raise FormatError("file too short for SATL header")
    magic, version, h, w, c, dtype, lattice_id = _SATL_HEADER.unpack_from(buf)
    if magic != SATL_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != SATL_VERSION:
        raise FormatError(f"unsupported SATL version {version}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype tag {dtype}")
    expected = h * w * c * 4
    payload = buf[_SATL_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()
    return arr, lattice_id


def write_satl(path, data, lattice_id: bytes):
    _atomic_write(path, encode_satl(data, lattice_id))


def read_satl(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(str(exc)) from exc
    return decode_satl(buf)


def write_permutation(path, cells: np.ndarray, lattice_id: bytes):
    cells = np.asarray(cells)
    header = _PERM_HEADER.pack(PERM_MAGIC, PERM_VERSION, len(cells), lattice_id)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, header + cells.astype("<u4").tobytes())


def read_permutation(path, lattice_id: bytes | None = None) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < _PERM_HEADER.size:
        raise FormatError("permutation cache truncated")
    magic, version, n, lid = _PERM_HEADER.unpack_from(buf)
    if magic != PERM_MAGIC or version != PERM_VERSION:
        raise FormatError("not a permutation cache file")
    if lattice_id is not None and lid != lattice_id:
        raise FormatError("permutation cache belongs to a different lattice")
    body = buf[_PERM_HEADER.size:]
    if len(body) != 4 * n:
        raise FormatError("permutation cache truncated")
    return np.frombuffer(body, dtype="<u4").astype(np.int64)
