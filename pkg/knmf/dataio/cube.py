"""
Cube Files

Binary layout (all little-endian):

    offset 0   magic b"HSI1"
    offset 4   L, T, a, b as uint32
    offset 20  L·T float64 values, band-major (row = band, column = pixel)

Pixel t is stored at image row ceil(t/b), column t - (row-1)·b. A file
with a .csv suffix is read and written as text instead: a first line
"L,T,a,b" followed by L rows of T comma-separated values.
"""

from pathlib import Path
from typing import Union
import struct

import numpy as np
import pandas as pd
import structlog

from knmf.errors import CubeFormatError
from knmf.factorization.types import HyperCube

logger = structlog.get_logger(__name__)

MAGIC = b"HSI1"
HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = HEADER.size

PathLike = Union[str, Path]


def _is_csv(path: Path) -> bool:
    return path.suffix.lower() == ".csv"


def write_cube(path: PathLike, cube: HyperCube) -> Path:
    """Write a cube in the binary format, or as CSV for a .csv path."""
    target = Path(path)
    if _is_csv(target):
        return _write_csv(target, cube)
    header = HEADER.pack(MAGIC, cube.bands, cube.pixels, cube.rows, cube.cols)
    payload = np.ascontiguousarray(cube.X, dtype="<f8").tobytes(order="C")
    target.write_bytes(header + payload)
    logger.info("cube_written", path=str(target), bands=cube.bands, pixels=cube.pixels)
    return target


def read_cube(path: PathLike) -> HyperCube:
    """
    Read a cube file.

    Raises:
        CubeFormatError: bad magic, truncated or oversized payload,
            T != a·b, or a negative / non-finite value
        OSError: the file cannot be read
    """
    source = Path(path)
    if _is_csv(source):
        return _read_csv(source)

    raw = source.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise CubeFormatError(f"truncated header: {len(raw)} of {HEADER_SIZE} bytes", offset=len(raw))
    if raw[:4] != MAGIC:
        raise CubeFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)

    L, T, a, b = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=4, offset=4))
    if a * b != T:
        raise CubeFormatError(f"header declares T={T} but a·b={a * b}", offset=8)

    expected = HEADER_SIZE + 8 * L * T
    if len(raw) < expected:
        raise CubeFormatError(
            f"truncated payload: {len(raw) - HEADER_SIZE} of {8 * L * T} bytes", offset=len(raw)
        )
    if len(raw) > expected:
        raise CubeFormatError(f"{len(raw) - expected} trailing bytes after payload", offset=expected)

    X = np.frombuffer(raw, dtype="<f8", count=L * T, offset=HEADER_SIZE).astype(np.float64).reshape(L, T)
    bad = np.flatnonzero(~(np.isfinite(X) & (X >= 0)).ravel())
    if bad.size:
        raise CubeFormatError(
            f"invalid value {X.ravel()[bad[0]]!r}", offset=HEADER_SIZE + 8 * int(bad[0])
        )

    logger.info("cube_read", path=str(source), bands=L, pixels=T, rows=a, cols=b)
    return HyperCube(X=X, rows=a, cols=b)


def _write_csv(target: Path, cube: HyperCube) -> Path:
    with target.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"{cube.bands},{cube.pixels},{cube.rows},{cube.cols}\n")
        pd.DataFrame(cube.X).to_csv(handle, header=False, index=False, float_format="%.17g")
    logger.info("cube_written", path=str(target), bands=cube.bands, pixels=cube.pixels, format="csv")
    return target


def _read_csv(source: Path) -> HyperCube:
    with source.open("r", encoding="utf-8") as handle:
        first = handle.readline().strip()
    try:
        L, T, a, b = (int(v) for v in first.split(","))
    except ValueError:
        raise CubeFormatError(f"bad CSV header {first!r}, expected 'L,T,a,b'", row=0, column=0) from None
    if a * b != T:
        raise CubeFormatError(f"header declares T={T} but a·b={a * b}", row=0, column=1)

    frame = pd.read_csv(source, header=None, skiprows=1, float_precision="round_trip")
    if frame.shape != (L, T):
        raise CubeFormatError(
            f"expected {L}x{T} values, found {frame.shape[0]}x{frame.shape[1]}",
            row=min(frame.shape[0], L) + 1,
            column=0,
        )
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    text = np.argwhere((numeric.isna() & frame.notna()).to_numpy())
    if text.size:
        r, c = (int(v) for v in text[0])
        raise CubeFormatError(
            f"non-numeric value {frame.iat[r, c]!r} in CSV payload", row=r + 2, column=c + 1
        )
    X = numeric.to_numpy(dtype=np.float64)
    bad = np.argwhere(~(np.isfinite(X) & (X >= 0)))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        # rows counted from the header line, columns from 1
        raise CubeFormatError(f"invalid value {X[r, c]!r}", row=r + 2, column=c + 1)

    logger.info("cube_read", path=str(source), bands=L, pixels=T, format="csv")
    return HyperCube(X=X, rows=a, cols=b)
