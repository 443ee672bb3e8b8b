"""
Factor Files

Endmember and abundance matrices as CSV tables with one column per
endmember: E is stored L×N (one row per band), A is stored transposed,
T×N (one row per pixel).
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import structlog
from numpy.typing import NDArray

from knmf.errors import CubeFormatError

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def _write_columns(path: PathLike, table: NDArray[np.float64], prefix: str) -> Path:
    target = Path(path)
    frame = pd.DataFrame(table, columns=[f"{prefix}{n + 1}" for n in range(table.shape[1])])
    frame.to_csv(target, index=False, float_format="%.17g")
    logger.info("factor_written", path=str(target), rows=table.shape[0], columns=table.shape[1])
    return target


def _read_columns(path: PathLike) -> NDArray[np.float64]:
    source = Path(path)
    frame = pd.read_csv(source, float_precision="round_trip")
    try:
        table = frame.to_numpy(dtype=np.float64)
    except ValueError:
        raise CubeFormatError(f"non-numeric entry in {source.name}", row=1, column=1) from None
    bad = np.argwhere(~np.isfinite(table))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        raise CubeFormatError(f"non-finite entry in {source.name}", row=r + 2, column=c + 1)
    return table


def write_endmembers(path: PathLike, E: NDArray[np.float64]) -> Path:
    return _write_columns(path, np.asarray(E, dtype=np.float64), "e")


def read_endmembers(path: PathLike) -> NDArray[np.float64]:
    """L×N endmember matrix."""
    return _read_columns(path)


def write_abundances(path: PathLike, A: NDArray[np.float64]) -> Path:
    return _write_columns(path, np.asarray(A, dtype=np.float64).T, "a")


def read_abundances(path: PathLike) -> NDArray[np.float64]:
    """N×T abundance matrix."""
    return np.ascontiguousarray(_read_columns(path).T)
