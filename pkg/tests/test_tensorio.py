"""Tensor container I/O: round trips, layout conversion, error taxonomy."""

import struct

import numpy as np
import pytest

from msdcrd import (HeaderError, TruncatedPayloadError, UnsupportedDTypeError,
                    load_f64, read_tensor, write_tensor)


def raw_npy(descr="'<f8'", fortran="False", shape="(2, 3)", payload=b"",
            magic=b"\x93NUMPY", version=b"\x01\x00", header=None):
    if header is None:
        header = ("{'descr': %s, 'fortran_order': %s, 'shape': %s, }"
                  % (descr, fortran, shape)).encode("ascii")
    pad = (-(10 + len(header) + 1)) % 64
    block = header + b" " * pad + b"\n"
    return magic + version + struct.pack("<H", len(block)) + block + payload


def test_round_trip_values(tmp_path):
    arr = np.arange(1.0, 7.0).reshape(2, 3)
    write_tensor(tmp_path / "t.npy", arr)
    back = read_tensor(tmp_path / "t.npy")
    assert back.shape == (2, 3)
    assert back.dtype == np.float64
    assert np.array_equal(back, arr)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("shape", [(5,), (3, 4), (2, 3, 4), (2, 2, 3, 3)])
def test_round_trip_bit_exact(tmp_path, dtype, shape):
    rng = np.random.default_rng(hash((dtype().nbytes, len(shape))) % 2**32)
    arr = rng.standard_normal(shape).astype(dtype)
    path = tmp_path / "t.npy"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == arr.dtype
    assert back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


def test_interop_with_numpy(tmp_path):
    rng = np.random.default_rng(7)
    arr = rng.standard_normal((3, 5)).astype(np.float64)
    np.save(tmp_path / "np.npy", arr)
    assert np.array_equal(read_tensor(tmp_path / "np.npy"), arr)
    write_tensor(tmp_path / "ours.npy", arr)
    assert np.array_equal(np.load(tmp_path / "ours.npy"), arr)


def test_fortran_order_converted(tmp_path):
    # column-major payload of a 2x3 array: element (i, j) sits at j*2 + i
    flat = np.array([1.0, 4.0, 2.0, 5.0, 3.0, 6.0])
    blob = raw_npy(fortran="True", payload=flat.tobytes())
    (tmp_path / "f.npy").write_bytes(blob)
    arr = read_tensor(tmp_path / "f.npy")
    assert arr.flags.c_contiguous
    for i in range(2):
        for j in range(3):
            assert arr[i, j] == flat[j * 2 + i]
    assert np.array_equal(arr, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])


def test_wrong_magic(tmp_path):
    (tmp_path / "bad.npy").write_bytes(raw_npy(magic=b"\x93NUMPZ"))
    with pytest.raises(HeaderError):
        read_tensor(tmp_path / "bad.npy")


def test_bad_version(tmp_path):
    blob = raw_npy(version=b"\x02\x00", payload=np.zeros(6).tobytes())
    (tmp_path / "bad.npy").write_bytes(blob)
    with pytest.raises(HeaderError):
        read_tensor(tmp_path / "bad.npy")


def test_truncated_payload(tmp_path):
    blob = raw_npy(payload=np.zeros(5).tobytes())  # shape wants 6 values
    (tmp_path / "short.npy").write_bytes(blob)
    with pytest.raises(TruncatedPayloadError):
        read_tensor(tmp_path / "short.npy")


def test_trailing_bytes(tmp_path):
    blob = raw_npy(payload=np.zeros(7).tobytes())
    (tmp_path / "long.npy").write_bytes(blob)
    with pytest.raises(HeaderError):
        read_tensor(tmp_path / "long.npy")


@pytest.mark.parametrize("descr", ["'<i4'", "'>f8'", "'<f2'"])
def test_unsupported_dtype(tmp_path, descr):
    blob = raw_npy(descr=descr, payload=np.zeros(6).tobytes())
    (tmp_path / "t.npy").write_bytes(blob)
    with pytest.raises(UnsupportedDTypeError):
        read_tensor(tmp_path / "t.npy")


@pytest.mark.parametrize("header", [
    b"not a dict at all",
    b"{'descr': '<f8', 'shape': (2, 3), }",                        # missing key
    b"{'descr': '<f8', 'fortran_order': 1, 'shape': (2, 3), }",    # non-bool flag
    b"{'descr': '<f8', 'fortran_order': False, 'shape': (0, 3), }",
    b"{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2, 2, 2, 2), }",
    b"{'descr': '<f8', 'fortran_order': False, 'shape': 6, }",
])
def test_bad_header(tmp_path, header):
    blob = raw_npy(header=header, payload=np.zeros(32).tobytes())
    (tmp_path / "t.npy").write_bytes(blob)
    with pytest.raises(HeaderError):
        read_tensor(tmp_path / "t.npy")


def test_header_extends_past_eof(tmp_path):
    blob = b"\x93NUMPY\x01\x00" + struct.pack("<H", 500) + b"{'descr'"
    (tmp_path / "t.npy").write_bytes(blob)
    with pytest.raises(HeaderError):
        read_tensor(tmp_path / "t.npy")


def test_read_rejects_nonfinite(tmp_path):
    payload = np.array([1.0, np.nan, 3.0, 4.0, 5.0, 6.0]).tobytes()
    (tmp_path / "t.npy").write_bytes(raw_npy(payload=payload))
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "t.npy")


def test_write_rejections(tmp_path):
    path = tmp_path / "t.npy"
    with pytest.raises(UnsupportedDTypeError):
        write_tensor(path, np.zeros((2, 2), dtype=np.int32))
    with pytest.raises(ValueError):
        write_tensor(path, np.zeros((2, 2, 2, 2, 2)))
    with pytest.raises(ValueError):
        write_tensor(path, np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        write_tensor(path, np.zeros((0, 3)))


@pytest.mark.parametrize("shape", [(1,), (17,), (3, 4), (2, 3, 4, 5)])
def test_header_block_64_aligned(tmp_path, shape):
    path = tmp_path / "t.npy"
    write_tensor(path, np.zeros(shape))
    data = path.read_bytes()
    (header_len,) = struct.unpack("<H", data[8:10])
    assert (10 + header_len) % 64 == 0
    assert data[10 + header_len - 1:10 + header_len] == b"\n"


def test_load_f64_widens(tmp_path):
    arr = np.array([1.5, 2.25, -3.125], dtype=np.float32)
    write_tensor(tmp_path / "t.npy", arr)
    wide = load_f64(tmp_path / "t.npy")
    assert wide.dtype == np.float64
    assert np.array_equal(wide, arr.astype(np.float64))


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        read_tensor(tmp_path / "absent.npy")
