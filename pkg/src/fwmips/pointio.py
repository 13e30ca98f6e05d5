"""Point-set files: the FWPS binary layout and a plain CSV reader/writer.

FWPS layout (little endian): 4-byte magic ``b"FWPS"``, ``u32 n``, ``u32 d``,
then ``n * d`` float64 values in row-major order.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, FwmipsError
from .geometry import PointSet, as_matrix

MAGIC = b"FWPS"
_HEADER = struct.Struct("<4sII")


class PointFileError(FwmipsError, OSError):
    """A point file is malformed."""


def write_fwps(path, points) -> Path:
    pts = points.points if isinstance(points, PointSet) else as_matrix(points)
    path = Path(path)
    n, d = pts.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
    return path


def read_fwps(path) -> PointSet:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise PointFileError(f"{path}: file shorter than the FWPS header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise PointFileError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise PointFileError(f"{path}: expected {expected} bytes for n={n}, d={d}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d)
    return PointSet(data.astype(np.float64))


def write_csv(path, points) -> Path:
    pts = points.points if isinstance(points, PointSet) else as_matrix(points)
    path = Path(path)
    np.savetxt(path, pts, delimiter=",", fmt="%.17g")
    return path


def read_csv(path) -> PointSet:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if data.size == 0:
        raise DimensionError(f"{path}: no points")
    return PointSet(data)


def read_points(path) -> PointSet:
    """Dispatch on the file suffix (``.csv`` or anything else as FWPS)."""
    path = Path(path)
    return read_csv(path) if path.suffix.lower() == ".csv" else read_fwps(path)
