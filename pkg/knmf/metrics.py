"""
Unmixing Metrics

Root-mean-square reconstruction error in the input space (RE) and in the
feature space (RE^Φ), spectral-angle matching against ground-truth
endmembers, and the abundance density used by parameter sweeps.
"""

from itertools import permutations
from typing import Optional

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from knmf.errors import InputError
from knmf.kernels import KernelSpec, cross_gram, diagonal, gram

logger = structlog.get_logger(__name__)

MAX_MATCH_RANK = 8


class EvalReport(BaseModel):
    """Evaluation of one set of factors against a cube (and optional truth)."""

    kernel: str
    re: float = Field(..., ge=0)
    re_phi: float = Field(..., ge=0)
    per_pixel_residuals: list[float]
    sam_per_endmember: Optional[list[float]] = Field(None, description="Degrees, synthetic scenes only")
    matching: Optional[list[int]] = Field(None, description="True endmember index per estimated column")

    @property
    def mean_angle(self) -> Optional[float]:
        if self.sam_per_endmember is None:
            return None
        return float(np.mean(self.sam_per_endmember))


def _matrices(X: ArrayLike, E: ArrayLike, A: ArrayLike) -> tuple[NDArray[np.float64], ...]:
    Xm, Em, Am = (np.asarray(M, dtype=np.float64) for M in (X, E, A))
    if Xm.ndim != 2 or Em.ndim != 2 or Am.ndim != 2:
        raise InputError("X, E and A must be matrices")
    if Xm.shape[0] != Em.shape[0] or Em.shape[1] != Am.shape[0] or Xm.shape[1] != Am.shape[1]:
        raise InputError(
            "dimension mismatch",
            X=list(Xm.shape),
            E=list(Em.shape),
            A=list(Am.shape),
        )
    return Xm, Em, Am


def reconstruction_error(X: ArrayLike, E: ArrayLike, A: ArrayLike) -> float:
    """RE = sqrt( (1/TL) sum_t ‖x_t - sum_n a_nt e_n‖² )."""
    Xm, Em, Am = _matrices(X, E, A)
    residual = Xm - Em @ Am
    return float(np.sqrt(np.sum(residual * residual) / Xm.size))


def feature_reconstruction_error(X: ArrayLike, E: ArrayLike, A: ArrayLike, kernel: KernelSpec) -> float:
    """RE^Φ through kernel evaluations only; equals sqrt(2J / TL)."""
    Xm, Em, Am = _matrices(X, E, A)
    squared = (
        np.sum(diagonal(kernel, Xm))
        - 2.0 * np.sum(Am * cross_gram(kernel, Em, Xm))
        + np.sum(Am * (gram(kernel, Em) @ Am))
    )
    # cancellation can leave a tiny negative residue on exact factorizations
    return float(np.sqrt(max(float(squared), 0.0) / Xm.size))


def per_pixel_residuals(X: ArrayLike, E: ArrayLike, A: ArrayLike) -> NDArray[np.float64]:
    Xm, Em, Am = _matrices(X, E, A)
    return np.linalg.norm(Xm - Em @ Am, axis=0)


def spectral_angle(u: ArrayLike, v: ArrayLike) -> float:
    """Angle in degrees between two spectra."""
    uv = np.asarray(u, dtype=np.float64)
    vv = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(uv), np.linalg.norm(vv)
    if nu == 0 or nv == 0:
        raise InputError("spectral angle is undefined for a zero spectrum")
    cosine = np.clip(uv @ vv / (nu * nv), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosine)))


def spectral_angle_match(E_est: ArrayLike, E_true: ArrayLike) -> tuple[list[int], list[float]]:
    """
    Bijective assignment of estimated to true endmembers minimizing the
    total spectral angle, by exhaustive search.

    Returns:
        (matching, angles) where matching[n] is the true column paired
        with estimated column n and angles[n] the angle in degrees.
    """
    Ee = np.asarray(E_est, dtype=np.float64)
    Et = np.asarray(E_true, dtype=np.float64)
    if Ee.shape != Et.shape:
        raise InputError(f"shape mismatch: {Ee.shape} vs {Et.shape}")
    N = Ee.shape[1]
    if N > MAX_MATCH_RANK:
        raise InputError(f"exhaustive matching supports N <= {MAX_MATCH_RANK}, got {N}")

    angles = np.array([[spectral_angle(Ee[:, n], Et[:, m]) for m in range(N)] for n in range(N)])
    best: tuple[int, ...] = tuple(range(N))
    best_total = np.inf
    for perm in permutations(range(N)):
        total = sum(angles[n, perm[n]] for n in range(N))
        if total < best_total:
            best, best_total = perm, total
    return list(best), [float(angles[n, best[n]]) for n in range(N)]


def abundance_density(A: ArrayLike, threshold: float = 0.01) -> float:
    """Fraction of abundance entries above threshold."""
    Am = np.asarray(A, dtype=np.float64)
    if Am.size == 0:
        return 0.0
    return float(np.count_nonzero(Am > threshold) / Am.size)


def evaluate(
    X: ArrayLike,
    E: ArrayLike,
    A: ArrayLike,
    kernel: KernelSpec,
    E_true: Optional[ArrayLike] = None,
) -> EvalReport:
    """Assemble the full evaluation of a set of factors."""
    matching: Optional[list[int]] = None
    angles: Optional[list[float]] = None
    if E_true is not None:
        matching, angles = spectral_angle_match(E, E_true)

    report = EvalReport(
        kernel=kernel.label,
        re=reconstruction_error(X, E, A),
        re_phi=feature_reconstruction_error(X, E, A, kernel),
        per_pixel_residuals=per_pixel_residuals(X, E, A).tolist(),
        sam_per_endmember=angles,
        matching=matching,
    )
    logger.info("factors_evaluated", kernel=report.kernel, re=report.re, re_phi=report.re_phi)
    return report
