"""TNSR: a small little-endian binary container for dense float64/complex128 arrays.

Layout::

    b"TNSR" | version:u8 | dtype:u8 | ndim:u8 | extents: ndim x u64 LE | payload LE

dtype 0 is real float64, dtype 1 is complex128 stored as interleaved (re, im)
float64 pairs. Arrays are plain ``numpy.ndarray`` objects; row-major order is
used for the payload regardless of the in-memory layout.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "DTYPE_REAL",
    "DTYPE_COMPLEX",
    "TnsrError",
    "BadMagicError",
    "UnsupportedFormatError",
    "TruncatedError",
    "as_tensor",
    "tnsr_dumps",
    "tnsr_loads",
    "tnsr_write",
    "tnsr_read",
]

MAGIC = b"TNSR"
VERSION = 1
DTYPE_REAL = 0
DTYPE_COMPLEX = 1

_HEADER = struct.Struct("<4sBBB")
_PAYLOAD_DTYPES = {DTYPE_REAL: np.dtype("<f8"), DTYPE_COMPLEX: np.dtype("<c16")}


class TnsrError(ValueError):
    """Base class for malformed TNSR data."""


class BadMagicError(TnsrError):
    pass


class UnsupportedFormatError(TnsrError):
    pass


class TruncatedError(TnsrError):
    pass


def as_tensor(values, *, allow_nonfinite: bool = False) -> np.ndarray:
    """Coerce ``values`` to a float64 or complex128 array, rejecting NaN/Inf."""
    arr = np.asarray(values)
    arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64, copy=False)
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def tnsr_dumps(t) -> bytes:
    arr = np.asarray(t)
    if np.iscomplexobj(arr):
        code = DTYPE_COMPLEX
    else:
        code = DTYPE_REAL
    # ascontiguousarray would promote 0-d input to shape (1,)
    arr = np.asarray(arr, dtype=_PAYLOAD_DTYPES[code], order="C")
    if arr.ndim > 255:
        raise UnsupportedFormatError(f"ndim {arr.ndim} exceeds 255")
    header = _HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    extents = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + extents + arr.tobytes(order="C")


def tnsr_loads(buf: bytes) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedError("header truncated")
    _, version, code, ndim = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported version {version}")
    if code not in _PAYLOAD_DTYPES:
        raise UnsupportedFormatError(f"unsupported dtype code {code}")
    offset = _HEADER.size
    need = offset + 8 * ndim
    if len(buf) < need:
        raise TruncatedError(f"extent table truncated: {len(buf)} < {need} bytes")
    shape = struct.unpack_from(f"<{ndim}Q", buf, offset)
    offset = need
    dtype = _PAYLOAD_DTYPES[code]
    count = math.prod(shape)
    nbytes = count * dtype.itemsize
    have = len(buf) - offset
    if have < nbytes:
        raise TruncatedError(f"payload truncated: {have} of {nbytes} bytes present")
    if have > nbytes:
        raise TnsrError(f"{have - nbytes} trailing bytes after payload")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    out = data.reshape(shape).astype(np.complex128 if code else np.float64)
    return out


def tnsr_write(t, path) -> None:
    blob = tnsr_dumps(t)
    path = Path(path)
    try:
        path.write_bytes(blob)
    except OSError as exc:
        raise OSError(f"cannot write TNSR file {path}: {exc.strerror or exc}") from exc


def tnsr_read(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read TNSR file {path}: {exc.strerror or exc}") from exc
    try:
        return tnsr_loads(blob)
    except TnsrError as exc:
        raise type(exc)(f"{path}: {exc}") from None
