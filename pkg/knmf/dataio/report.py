"""
Run Reports

JSON run report plus per-endmember abundance map exports (CSV and 8-bit
binary PGM, linearly scaled to 0-255 per map). The report carries no
timestamps, so identical flags and seeds reproduce it byte for byte.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
import structlog
from numpy.typing import NDArray
from pydantic import BaseModel

from knmf.factorization.types import RunResult
from knmf.governance.audit_logger import digest_arrays
from knmf.metrics import EvalReport
from knmf.regularizers import fold_abundance

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


class RunReport(BaseModel):
    config: dict
    kernel: str
    iterations: int
    cost_trace: list[float]
    objective_trace: list[float]
    final_cost: float
    re: float
    re_phi: float
    sam_per_endmember: Optional[list[float]] = None
    matching: Optional[list[int]] = None
    zero_columns: list[int] = []
    result_digest: str


def build_report(result: RunResult, evaluation: EvalReport) -> RunReport:
    return RunReport(
        config=result.config_echo(),
        kernel=result.config.kernel.label,
        iterations=result.iterations,
        cost_trace=result.cost_trace,
        objective_trace=result.objective_trace,
        final_cost=result.final_cost,
        re=evaluation.re,
        re_phi=evaluation.re_phi,
        sam_per_endmember=evaluation.sam_per_endmember,
        matching=evaluation.matching,
        zero_columns=result.zero_columns,
        result_digest=digest_arrays(result.E, result.A, np.asarray(result.cost_trace)),
    )


def write_report(path: PathLike, result: RunResult, evaluation: EvalReport) -> Path:
    """Write the run report as UTF-8 JSON."""
    target = Path(path)
    report = build_report(result, evaluation)
    target.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info("report_written", path=str(target), iterations=report.iterations, re=report.re)
    return target


def scale_to_bytes(M: NDArray[np.float64]) -> NDArray[np.uint8]:
    """Linear map of [min, max] onto [0, 255]; a constant map becomes all zeros."""
    lo, hi = float(M.min()), float(M.max())
    if hi <= lo:
        return np.zeros(M.shape, dtype=np.uint8)
    return np.rint((M - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path: PathLike, M: NDArray[np.float64]) -> Path:
    """Binary (P5) greyscale image of an a×b map."""
    target = Path(path)
    rows, cols = M.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    target.write_bytes(header + scale_to_bytes(M).tobytes())
    return target


def write_abundance_maps(
    prefix: PathLike, A: NDArray[np.float64], shape: tuple[int, int]
) -> list[Path]:
    """{prefix}_map{n}.csv and {prefix}_map{n}.pgm for every endmember, n from 1."""
    written: list[Path] = []
    for n in range(A.shape[0]):
        M = fold_abundance(A, n, shape)
        csv_path = Path(f"{prefix}_map{n + 1}.csv")
        pd.DataFrame(M).to_csv(csv_path, header=False, index=False, float_format="%.17g")
        written.append(csv_path)
        written.append(write_pgm(Path(f"{prefix}_map{n + 1}.pgm"), M))
    logger.info("abundance_maps_written", prefix=str(prefix), maps=A.shape[0])
    return written
