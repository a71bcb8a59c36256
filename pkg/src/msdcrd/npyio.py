"""Bit-exact reading and writing of the NPY v1.0 tensor container.

Only little-endian float32/float64 payloads of rank 1..4 are accepted.
Fortran-ordered files are converted to the canonical row-major layout on
load; files are always written row-major with the header padded so that
the total header block is a multiple of 64 bytes.
"""

from __future__ import annotations

import ast
import math
import struct
from pathlib import Path

import numpy as np

from .errors import HeaderError, TruncatedPayloadError, UnsupportedDTypeError

MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_HEADER_ALIGN = 64
_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
MAX_RANK = 4


def _check_array(arr: np.ndarray) -> None:
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise ValueError(f"rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if any(extent < 1 for extent in arr.shape):
        raise ValueError(f"all extents must be positive, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor holds non-finite values")


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write a float32/float64 array to `path` in container format.

    Raises:
        UnsupportedDTypeError: element type is not float32/float64.
        ValueError: bad rank, non-positive extent, or non-finite values.
    """
    arr = np.asarray(array)
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.float64:
        descr = "<f8"
    else:
        raise UnsupportedDTypeError(f"cannot write dtype {arr.dtype}")
    _check_array(arr)
    arr = np.ascontiguousarray(arr.astype(_DESCRS[descr], copy=False))

    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        descr, str(tuple(int(s) for s in arr.shape)))
    base = len(MAGIC) + len(_VERSION) + 2   # bytes before the header text
    total = base + len(header) + 1          # +1 for the trailing newline
    pad = (-total) % _HEADER_ALIGN
    header_bytes = header.encode("ascii") + b" " * pad + b"\n"

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_VERSION)
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file, returning a row-major array in the file's dtype.

    Raises:
        HeaderError: bad magic, version, header dict, or trailing bytes.
        UnsupportedDTypeError: descr other than '<f4' / '<f8'.
        TruncatedPayloadError: payload shorter than the shape requires.
        ValueError: non-finite payload values.
    """
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:6] != MAGIC:
        raise HeaderError(f"{path}: not a tensor container (bad magic bytes)")
    if data[6:8] != _VERSION:
        raise HeaderError(f"{path}: unsupported container version {data[6]}.{data[7]}")
    (header_len,) = struct.unpack("<H", data[8:10])
    if len(data) < 10 + header_len:
        raise HeaderError(f"{path}: header extends past end of file")

    try:
        text = data[10:10 + header_len].decode("ascii")
        meta = ast.literal_eval(text.strip())
    except (UnicodeDecodeError, ValueError, SyntaxError) as exc:
        raise HeaderError(f"{path}: unparseable header: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise HeaderError(f"{path}: header must declare descr, fortran_order, shape")

    descr = meta["descr"]
    if descr not in _DESCRS:
        raise UnsupportedDTypeError(f"{path}: unsupported element type {descr!r}")
    fortran = meta["fortran_order"]
    if not isinstance(fortran, bool):
        raise HeaderError(f"{path}: fortran_order must be a boolean")
    shape = meta["shape"]
    if (not isinstance(shape, tuple) or not shape or len(shape) > MAX_RANK
            or not all(isinstance(s, int) and s > 0 for s in shape)):
        raise HeaderError(f"{path}: shape must be 1..{MAX_RANK} positive extents, "
                          f"got {shape!r}")

    dtype = _DESCRS[descr]
    expected = math.prod(shape) * dtype.itemsize
    payload = data[10 + header_len:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, shape needs {expected}")
    if len(payload) > expected:
        raise HeaderError(f"{path}: {len(payload) - expected} trailing bytes after payload")

    flat = np.frombuffer(payload, dtype=dtype)
    order = "F" if fortran else "C"
    arr = np.array(flat.reshape(shape, order=order), order="C")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: tensor holds non-finite values")
    return arr


def load_f64(path: str | Path) -> np.ndarray:
    """Read a tensor and widen it to the 64-bit internal compute precision."""
    return read_tensor(path).astype(np.float64, copy=False)
