"""
Diagnostics

Finite-difference gradient checking and the nonconvexity probe.

The probe searches small random instances for a negative diagonal entry
of the Hessian of the cost with respect to one endmember. The displayed
closed forms for the polynomial and Gaussian kernels are evaluated as
written; a second-order finite difference of the cost is reported next to
them so disagreements are visible instead of silently corrected.
"""

from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import structlog
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from knmf.errors import InputError, NumericError, UnsupportedConfigurationError
from knmf.factorization.updates import abundance_gradient, cost, endmember_gradient
from knmf.governance.telemetry import SolverTelemetry
from knmf.kernels import KernelSpec, KernelVariant
from knmf.regularizers import (
    RegularizerSet,
    l2_feature_terms,
    l2_input_terms,
    sparsity_terms,
    spatial_terms,
    weighted_average_terms,
)

logger = structlog.get_logger(__name__)

NEGATIVE_TOLERANCE = -1e-8
HESSIAN_STEP = 1e-4
GRADCHECK_THRESHOLD = 1e-5


def fd_check(
    f: Callable[[NDArray[np.float64]], float],
    g: Union[Callable[[NDArray[np.float64]], ArrayLike], ArrayLike],
    point: ArrayLike,
    step: float = 1e-6,
) -> float:
    """
    Max over coordinates of |fd - g| / max(1e-12, |fd|, |g|) with central
    differences of f around point.

    Raises:
        InputError: step <= 0
        NumericError: f is not finite at a probed point
    """
    if step <= 0:
        raise InputError(f"step must be positive, got {step}")
    x = np.array(point, dtype=np.float64)
    claimed = np.asarray(g(x) if callable(g) else g, dtype=np.float64).reshape(x.shape)

    worst = 0.0
    for idx in np.ndindex(x.shape):
        plus = x.copy()
        minus = x.copy()
        plus[idx] += step
        minus[idx] -= step
        f_plus, f_minus = f(plus), f(minus)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("non-finite function value during finite differencing", index=list(idx))
        fd = (f_plus - f_minus) / (2.0 * step)
        err = abs(fd - claimed[idx]) / max(1e-12, abs(fd), abs(claimed[idx]))
        worst = max(worst, err)
    return worst


# Hessian diagonal

def _check_indices(E: NDArray[np.float64], n: int, k: int) -> None:
    L, N = E.shape
    if not 0 <= n < N:
        raise InputError(f"n={n} out of range [0, {N})")
    if not 0 <= k < L:
        raise InputError(f"k={k} out of range [0, {L})")


def hessian_diag_poly(
    X: ArrayLike, E: ArrayLike, A: ArrayLike, d: int, c: float, n: int, k: int
) -> float:
    """
    d(d-1) sum_t a_nt ( -(x_tᵀe_n + c)^(d-2) x_kt²
                        + sum_j a_jt (e_jᵀe_n + c)^(d-2) e_jk² ).
    """
    Xm, Em, Am = (np.asarray(M, dtype=np.float64) for M in (X, E, A))
    _check_indices(Em, n, k)
    if d < 2:
        raise InputError(f"degree must be >= 2, got {d}")
    e = Em[:, n]
    data_term = -((Xm.T @ e + c) ** (d - 2)) * Xm[k] ** 2
    endmember_term = ((Em.T @ e + c) ** (d - 2) * Em[k] ** 2) @ Am
    return float(d * (d - 1) * np.sum(Am[n] * (data_term + endmember_term)))


def hessian_diag_gauss(
    X: ArrayLike, E: ArrayLike, A: ArrayLike, sigma: float, n: int, k: int
) -> float:
    """
    (1/σ⁴) sum_t ( σ²kappa(e_n,x_t) - σ² sum_j a_jt kappa(e_n,e_j)
                   + sum_j a_jt kappa(e_n,e_j)(e_kn - e_kj)² - kappa(e_n,x_t)(e_kn - x_kt)² ).
    """
    Xm, Em, Am = (np.asarray(M, dtype=np.float64) for M in (X, E, A))
    _check_indices(Em, n, k)
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    s2 = sigma**2
    e = Em[:, n]
    k_x = np.exp(-np.sum((Xm - e[:, None]) ** 2, axis=0) / (2.0 * s2))
    k_e = np.exp(-np.sum((Em - e[:, None]) ** 2, axis=0) / (2.0 * s2))
    dk_e = (e[k] - Em[k]) ** 2
    per_pixel = (
        s2 * k_x
        - s2 * (k_e @ Am)
        + (k_e * dk_e) @ Am
        - k_x * (e[k] - Xm[k]) ** 2
    )
    return float(np.sum(per_pixel) / s2**2)


def hessian_diag_linear(A: ArrayLike, n: int) -> float:
    """Exact diagonal entry for the linear kernel: sum_t a_nt²."""
    Am = np.asarray(A, dtype=np.float64)
    if not 0 <= n < Am.shape[0]:
        raise InputError(f"n={n} out of range [0, {Am.shape[0]})")
    return float(Am[n] @ Am[n])


def hessian_diag(kernel: KernelSpec, X: ArrayLike, E: ArrayLike, A: ArrayLike, n: int, k: int) -> float:
    if kernel.variant == KernelVariant.POLYNOMIAL:
        return hessian_diag_poly(X, E, A, kernel.degree, kernel.offset, n, k)
    if kernel.variant == KernelVariant.GAUSSIAN:
        return hessian_diag_gauss(X, E, A, kernel.sigma, n, k)
    _check_indices(np.asarray(E, dtype=np.float64), n, k)
    return hessian_diag_linear(A, n)


def hessian_diag_fd(
    kernel: KernelSpec,
    X: ArrayLike,
    E: ArrayLike,
    A: ArrayLike,
    n: int,
    k: int,
    step: float = HESSIAN_STEP,
) -> float:
    """Second central difference of the cost along e_kn."""
    Xm, Em, Am = (np.asarray(M, dtype=np.float64) for M in (X, E, A))
    _check_indices(Em, n, k)
    plus, minus = Em.copy(), Em.copy()
    plus[k, n] += step
    minus[k, n] -= step
    values = [cost(Xm, M, Am, kernel) for M in (plus, Em, minus)]
    if not all(np.isfinite(v) for v in values):
        raise NumericError("non-finite cost during Hessian differencing")
    return (values[0] - 2.0 * values[1] + values[2]) / step**2


# Nonconvexity probe

class ProbeVerdict(str, Enum):
    NEGATIVE_FOUND = "NegativeFound"
    NONE_FOUND = "NoneFound"


class ProbeWitness(BaseModel):
    sample_index: int
    X: list[list[float]]
    E: list[list[float]]
    A: list[list[float]]
    n: int
    k: int


class ProbeReport(BaseModel):
    """Outcome of a nonconvexity search."""

    kernel: KernelSpec
    verdict: ProbeVerdict
    samples: int = Field(..., ge=0, description="Instances examined")
    witness: Optional[ProbeWitness] = None
    h_kk: Optional[float] = Field(None, description="Closed-form diagonal entry at the witness")
    h_kk_fd: Optional[float] = Field(None, description="Finite-difference diagonal entry at the witness")
    formula_agrees: Optional[bool] = None


def _draw_instance(
    seed: int, index: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], int, int]:
    rng = np.random.default_rng([seed, index])
    L, N, T = (int(v) for v in rng.integers(1, 6, size=3))
    X = rng.random((L, T))
    E = rng.random((L, N))
    A = rng.random((N, T))
    n = int(rng.integers(N))
    k = int(rng.integers(L))
    if index % 2 == 1:
        # targeted construction: a vanishing component of the probed endmember
        E[k, n] = 0.0
    return X, E, A, n, k


def _scan(kernel: KernelSpec, seed: int, indices: range) -> Optional[int]:
    for i in indices:
        X, E, A, n, k = _draw_instance(seed, i)
        if hessian_diag(kernel, X, E, A, n, k) < NEGATIVE_TOLERANCE:
            return i
    return None


def probe_nonconvexity(
    kernel: KernelSpec,
    search_budget: int,
    seed: int,
    workers: int = 1,
    control: bool = False,
    telemetry: Optional[SolverTelemetry] = None,
) -> ProbeReport:
    """
    Random search for H_kk < -1e-8 over instances with L, N, T <= 5 and
    entries in [0, 1]. Sample i draws from its own seeded stream, so the
    reported witness (smallest index) does not depend on workers.

    The linear kernel has a convex subproblem; it is accepted only as a
    negative control (control=True) and never yields a witness.
    """
    if search_budget < 1:
        raise InputError(f"search budget must be >= 1, got {search_budget}")
    if kernel.variant == KernelVariant.LINEAR and not control:
        raise UnsupportedConfigurationError(
            "the linear-kernel subproblem is convex; run it as a negative control"
        )

    if workers <= 1:
        found = _scan(kernel, seed, range(search_budget))
    else:
        bounds = np.linspace(0, search_budget, workers + 1).astype(int)
        hits = Parallel(n_jobs=workers, prefer="threads")(
            delayed(_scan)(kernel, seed, range(int(lo), int(hi)))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        )
        found = min((h for h in hits if h is not None), default=None)

    samples = search_budget if found is None else found + 1
    (telemetry or SolverTelemetry()).record_probe(kernel.variant.value, samples)

    if found is None:
        logger.info("probe_completed", kernel=kernel.label, verdict=ProbeVerdict.NONE_FOUND.value, samples=samples)
        return ProbeReport(kernel=kernel, verdict=ProbeVerdict.NONE_FOUND, samples=samples)

    X, E, A, n, k = _draw_instance(seed, found)
    h = hessian_diag(kernel, X, E, A, n, k)
    h_fd = hessian_diag_fd(kernel, X, E, A, n, k)
    agrees = abs(h - h_fd) <= 1e-4 * max(1.0, abs(h_fd))
    if not agrees:
        logger.warning("probe_formula_disagreement", kernel=kernel.label, h_kk=h, h_kk_fd=h_fd)
    logger.info("probe_witness_found", kernel=kernel.label, sample_index=found, h_kk=h)
    return ProbeReport(
        kernel=kernel,
        verdict=ProbeVerdict.NEGATIVE_FOUND,
        samples=samples,
        witness=ProbeWitness(
            sample_index=found, X=X.tolist(), E=E.tolist(), A=A.tolist(), n=n, k=k
        ),
        h_kk=h,
        h_kk_fd=h_fd,
        formula_agrees=agrees,
    )


# Gradient suites

def _instance_scale(kernel: KernelSpec) -> float:
    if kernel.variant == KernelVariant.GAUSSIAN:
        return min(1.0, kernel.sigma)
    return 1.0


def gradient_suite(
    kernel: KernelSpec,
    seed: int = 0,
    step: float = 1e-6,
    inject_bug: bool = False,
) -> dict[str, float]:
    """
    Max relative finite-difference error of every analytic gradient on a
    seeded strictly positive instance (L=5, N=3, 4×5 image).

    Endmember-side step and instance spread shrink with a narrow Gaussian
    bandwidth; abundance-side checks keep the given step since the cost is
    quadratic in A.
    inject_bug perturbs the abundance gradient so the check must fail.
    """
    scale = _instance_scale(kernel)
    h = step * scale
    rng = np.random.default_rng(seed)
    L, N, rows, cols = 5, 3, 4, 5
    T = rows * cols
    X = scale * rng.uniform(0.1, 1.0, size=(L, T))
    E = scale * rng.uniform(0.1, 1.0, size=(L, N))
    A = rng.uniform(0.1, 1.0, size=(N, T))
    spatial = RegularizerSet(
        omega_l=1.0, omega_r=1.0, omega_u=1.0, omega_d=1.0, alpha_spatial=0.5
    )

    def _claimed_a(M: NDArray[np.float64]) -> NDArray[np.float64]:
        grad = abundance_gradient(X, E, M, kernel)
        return grad * 1.01 if inject_bug else grad

    errors = {
        "grad_a": fd_check(lambda M: cost(X, E, M, kernel), _claimed_a, A, step),
        "grad_e": fd_check(
            lambda M: cost(X, M, A, kernel), lambda M: endmember_gradient(X, M, A, kernel), E, h
        ),
        "l2_input": fd_check(
            lambda M: l2_input_terms(M, 0.7).penalty, lambda M: l2_input_terms(M, 0.7).gradient, E, h
        ),
        "l2_feature": fd_check(
            lambda M: l2_feature_terms(M, 0.7, kernel).penalty,
            lambda M: l2_feature_terms(M, 0.7, kernel).gradient,
            E,
            h,
        ),
        "weighted_average": fd_check(
            lambda M: weighted_average_terms(M, 0.9, 0.5).penalty,
            lambda M: weighted_average_terms(M, 0.9, 0.5).gradient,
            E,
            h,
        ),
        "sparsity": fd_check(
            lambda M: sparsity_terms(M, 0.4).penalty, lambda M: sparsity_terms(M, 0.4).gradient, A, step
        ),
        "spatial": fd_check(
            lambda M: spatial_terms(M, (rows, cols), spatial).penalty,
            lambda M: spatial_terms(M, (rows, cols), spatial).gradient,
            A,
            step,
        ),
    }
    logger.info("gradient_suite_completed", kernel=kernel.label, worst=max(errors.values()))
    return errors
