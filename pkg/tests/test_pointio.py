import struct

import numpy as np
import pytest

from fwmips.geometry import PointSet
from fwmips.pointio import PointFileError, read_csv, read_fwps, read_points, write_csv, write_fwps


def test_fwps_roundtrip(tmp_path):
    x = np.random.default_rng(0).standard_normal((10, 4))
    path = write_fwps(tmp_path / "p.fwps", PointSet(x))
    raw = path.read_bytes()
    assert raw[:4] == b"FWPS"
    assert struct.unpack("<II", raw[4:12]) == (10, 4)
    assert len(raw) == 12 + 8 * 40
    np.testing.assert_array_equal(read_fwps(path).points, x)
    np.testing.assert_array_equal(read_points(path).points, x)


def test_fwps_bad_magic_and_length(tmp_path):
    p = tmp_path / "bad.fwps"
    p.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + b"\0" * 8)
    with pytest.raises(PointFileError):
        read_fwps(p)
    p.write_bytes(b"FWPS" + struct.pack("<II", 2, 2) + b"\0" * 8)
    with pytest.raises(PointFileError):
        read_fwps(p)


def test_csv_roundtrip(tmp_path):
    x = np.random.default_rng(1).standard_normal((5, 3))
    path = write_csv(tmp_path / "p.csv", x)
    np.testing.assert_array_equal(read_csv(path).points, x)
    np.testing.assert_array_equal(read_points(path).points, x)
    single = tmp_path / "one.csv"
    single.write_text("1.5,2.5\n")
    assert read_csv(single).points.shape == (1, 2)
