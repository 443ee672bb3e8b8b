"""
Update Rules

Cost, gradients and the additive / multiplicative update rules of the
kernel NMF with input-space endmembers. Everything is written in terms of
Gram blocks K_EX = [kappa(e_n, x_t)] and K_EE = [kappa(e_n, e_m)], so the
feature map never appears.

Multiplicative rules follow the split-gradient construction: the gradient
is written as scale * (denominator - numerator) with both parts
nonnegative, and the factor is multiplied by numerator / denominator.
"""

from typing import Callable, Optional

import numpy as np
import structlog
from joblib import Parallel, delayed
from numpy.typing import NDArray

from knmf.errors import InputError, SolverError, UnsupportedConfigurationError
from knmf.factorization.types import (
    Abundances,
    Endmembers,
    InitMethod,
    SolverConfig,
    StepsizePolicy,
)
from knmf.kernels import (
    KernelSpec,
    KernelVariant,
    cross_gram,
    diagonal,
    evaluate,
    gram,
    weighted_gradient_sum,
)
from knmf.regularizers import RegularizerSet, abundance_terms, endmember_terms

logger = structlog.get_logger(__name__)


def _check_shapes(X: NDArray[np.float64], E: NDArray[np.float64], A: NDArray[np.float64]) -> None:
    if X.ndim != 2 or E.ndim != 2 or A.ndim != 2:
        raise InputError("X, E and A must be matrices")
    if X.shape[0] != E.shape[0]:
        raise InputError(f"dimension mismatch: X has {X.shape[0]} bands, E has {E.shape[0]}")
    if E.shape[1] != A.shape[0]:
        raise InputError(f"dimension mismatch: E has {E.shape[1]} endmembers, A has {A.shape[0]} rows")
    if X.shape[1] != A.shape[1]:
        raise InputError(f"dimension mismatch: X has {X.shape[1]} pixels, A has {A.shape[1]}")


def _check_index(value: int, bound: int, name: str) -> None:
    if not 0 <= value < bound:
        raise InputError(f"{name}={value} out of range [0, {bound})")


def _chunks(count: int, workers: int) -> list[slice]:
    if workers <= 1 or count <= 1:
        return [slice(0, count)]
    bounds = np.linspace(0, count, min(workers, count) + 1).astype(int)
    return [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _map_chunks(
    fn: Callable[[slice], NDArray[np.float64]], count: int, workers: int
) -> list[NDArray[np.float64]]:
    """Apply fn to contiguous index chunks; one chunk and no pool when workers == 1."""
    slices = _chunks(count, workers)
    if len(slices) == 1:
        return [fn(slices[0])]
    return Parallel(n_jobs=len(slices), prefer="threads")(delayed(fn)(s) for s in slices)


def _guarded_ratio(num: NDArray[np.float64], den: NDArray[np.float64], eps: float) -> NDArray[np.float64]:
    """num / (den + eps), with ratio 1 where both sides are below eps."""
    ratio = num / (den + eps)
    inert = (num < eps) & (den < eps)
    if inert.any():
        ratio = np.where(inert, 1.0, ratio)
    return ratio


# Cost and gradients

def cost(X: NDArray[np.float64], E: Endmembers, A: Abundances, kernel: KernelSpec) -> float:
    """
    J = 1/2 sum_t [kappa(x_t, x_t) - 2 sum_n a_nt kappa(e_n, x_t)
                   + sum_n sum_m a_nt a_mt kappa(e_n, e_m)].
    """
    X, E, A = (np.asarray(M, dtype=np.float64) for M in (X, E, A))
    _check_shapes(X, E, A)
    K_EX = cross_gram(kernel, E, X)
    K_EE = gram(kernel, E)
    return 0.5 * float(np.sum(diagonal(kernel, X)) - 2.0 * np.sum(A * K_EX) + np.sum(A * (K_EE @ A)))


def penalty(
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    regularizers: RegularizerSet,
    shape: Optional[tuple[int, int]] = None,
) -> float:
    """Sum of every active regularizer penalty."""
    if regularizers.is_empty:
        return 0.0
    return endmember_terms(E, kernel, regularizers).penalty + abundance_terms(A, regularizers, shape).penalty


def objective(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    regularizers: RegularizerSet,
    shape: Optional[tuple[int, int]] = None,
) -> float:
    """Cost plus penalties; the quantity the regularized rules descend."""
    return cost(X, E, A, kernel) + penalty(E, A, kernel, regularizers, shape)


def abundance_gradient(
    X: NDArray[np.float64], E: Endmembers, A: Abundances, kernel: KernelSpec
) -> NDArray[np.float64]:
    """N×T matrix of dJ/da_nt = -kappa(e_n, x_t) + sum_m a_mt kappa(e_n, e_m)."""
    _check_shapes(X, E, A)
    return gram(kernel, E) @ A - cross_gram(kernel, E, X)


def grad_a(
    X: NDArray[np.float64], E: Endmembers, A: Abundances, kernel: KernelSpec, n: int, t: int
) -> float:
    _check_shapes(X, E, A)
    _check_index(n, E.shape[1], "n")
    _check_index(t, X.shape[1], "t")
    k_row = np.array([evaluate(kernel, E[:, n], E[:, m]) for m in range(E.shape[1])])
    return float(k_row @ A[:, t] - evaluate(kernel, E[:, n], X[:, t]))


def endmember_gradient(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    columns: slice = slice(None),
) -> NDArray[np.float64]:
    """
    L×N' matrix whose column n is dJ/de_n
    = sum_t a_nt [-grad kappa(e_n, x_t) + sum_m a_mt grad kappa(e_n, e_m)],
    restricted to the endmembers selected by columns.
    """
    _check_shapes(X, E, A)
    En = E[:, columns]
    An = A[columns]
    return -weighted_gradient_sum(kernel, En, X, An) + weighted_gradient_sum(kernel, En, E, An @ A.T)


def grad_e(
    X: NDArray[np.float64], E: Endmembers, A: Abundances, kernel: KernelSpec, n: int
) -> NDArray[np.float64]:
    _check_shapes(X, E, A)
    _check_index(n, E.shape[1], "n")
    return endmember_gradient(X, E, A, kernel, slice(n, n + 1))[:, 0]


# Additive (projected gradient) rules

def _descend(
    current: NDArray[np.float64],
    direction: NDArray[np.float64],
    eta: float,
    policy: StepsizePolicy,
    project: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    evaluate_at: Callable[[NDArray[np.float64]], float],
) -> NDArray[np.float64]:
    candidate = project(current - eta * direction)
    if not policy.backtracking:
        return candidate
    baseline = evaluate_at(current)
    for halving in range(policy.max_halvings + 1):
        if evaluate_at(candidate) <= baseline:
            if halving:
                logger.debug("stepsize_halved", halvings=halving, eta=eta)
            return candidate
        eta *= 0.5
        candidate = project(current - eta * direction)
    logger.debug("backtracking_exhausted", eta=eta)
    return current.copy()


def _rectify(M: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.maximum(M, 0.0)


def additive_step_a(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    stepsize: StepsizePolicy,
    regularizers: RegularizerSet,
    shape: Optional[tuple[int, int]] = None,
    workers: int = 1,
) -> Abundances:
    """a_nt <- max(0, a_nt - eta (dJ/da_nt + abundance regularizer term))."""
    _check_shapes(X, E, A)
    terms = abundance_terms(A, regularizers, shape)
    K_EE = gram(kernel, E)

    def _gradient(cols: slice) -> NDArray[np.float64]:
        return K_EE @ A[:, cols] - cross_gram(kernel, E, X[:, cols])

    direction = np.hstack(_map_chunks(_gradient, X.shape[1], workers)) + terms.gradient
    return _descend(
        A,
        direction,
        stepsize.eta_a,
        stepsize,
        _rectify,
        lambda cand: cost(X, E, cand, kernel) + abundance_terms(cand, regularizers, shape).penalty,
    )


def additive_step_e(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    stepsize: StepsizePolicy,
    regularizers: RegularizerSet,
    semi_nmf: bool = False,
    workers: int = 1,
) -> Endmembers:
    """e_n <- max(0, e_n - eta (dJ/de_n + endmember regularizer term)); no clamp under semi-NMF."""
    _check_shapes(X, E, A)
    terms = endmember_terms(E, kernel, regularizers)

    def _gradient(ns: slice) -> NDArray[np.float64]:
        return endmember_gradient(X, E, A, kernel, ns)

    direction = np.hstack(_map_chunks(_gradient, E.shape[1], workers)) + terms.gradient
    project: Callable[[NDArray[np.float64]], NDArray[np.float64]] = (
        (lambda M: M) if semi_nmf else _rectify
    )
    return _descend(
        E,
        direction,
        stepsize.eta_e,
        stepsize,
        project,
        lambda cand: cost(X, cand, A, kernel) + endmember_terms(cand, kernel, regularizers).penalty,
    )


# Multiplicative (split-gradient) rules

def multiplicative_step_a(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    regularizers: RegularizerSet,
    shape: Optional[tuple[int, int]] = None,
    eps: float = 1e-12,
    workers: int = 1,
) -> Abundances:
    """a_nt <- a_nt * (kappa(e_n, x_t) + G⁻) / (sum_m a_mt kappa(e_n, e_m) + mu + G⁺ + eps)."""
    _check_shapes(X, E, A)
    if np.any(A < 0):
        raise SolverError("multiplicative abundance rule needs A >= 0")
    terms = abundance_terms(A, regularizers, shape)
    K_EE = gram(kernel, E)
    if np.any(K_EE < 0):
        raise SolverError("negative kernel values between endmembers", kernel=kernel.label)

    def _sweep(cols: slice) -> NDArray[np.float64]:
        K = cross_gram(kernel, E, X[:, cols])
        if np.any(K < 0):
            raise SolverError("negative kernel values between endmembers and data", kernel=kernel.label)
        num = K + terms.numerator[:, cols]
        den = K_EE @ A[:, cols] + terms.denominator[:, cols]
        return A[:, cols] * _guarded_ratio(num, den, eps)

    return np.hstack(_map_chunks(_sweep, X.shape[1], workers))


def _endmember_split(
    X: NDArray[np.float64], E: Endmembers, A: Abundances, kernel: KernelSpec
) -> tuple[Callable[[slice], tuple[NDArray[np.float64], NDArray[np.float64]]], float]:
    """Per-kernel (numerator, denominator) builder over endmember chunks, and its gradient scale."""
    P = A @ A.T
    if kernel.variant == KernelVariant.LINEAR:

        def _linear(ns: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
            return X @ A[ns].T, E @ P[:, ns]

        return _linear, 1.0

    if kernel.variant == KernelVariant.POLYNOMIAL:
        if kernel.degree != 2:
            raise UnsupportedConfigurationError(
                f"no multiplicative endmember rule for polynomial degree {kernel.degree}",
                degree=kernel.degree,
            )
        c = kernel.offset
        weighted_ee = (E.T @ E + c) * P

        def _poly(ns: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
            return X @ (A[ns] * (E[:, ns].T @ X + c)).T, E @ weighted_ee[:, ns]

        return _poly, 2.0

    weighted_ee = P * gram(kernel, E)

    def _gauss(ns: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        W = A[ns] * cross_gram(kernel, E[:, ns], X)
        num = X @ W.T + E[:, ns] * weighted_ee[:, ns].sum(axis=0)
        den = E[:, ns] * W.sum(axis=1) + E @ weighted_ee[:, ns]
        return num, den

    return _gauss, 1.0 / kernel.sigma**2


def multiplicative_step_e(
    X: NDArray[np.float64],
    E: Endmembers,
    A: Abundances,
    kernel: KernelSpec,
    regularizers: RegularizerSet,
    eps: float = 1e-12,
    workers: int = 1,
) -> Endmembers:
    """
    e_n <- e_n ⊗ numerator / (denominator + eps), componentwise.

    Regularizer parts enter numerator and denominator as they are. With
    regularizers.scale_endmember_terms they are divided by the kernel's
    gradient scale instead (2 for the degree-2 polynomial, 1/sigma^2 for
    the Gaussian).
    """
    _check_shapes(X, E, A)
    if np.any(E < 0):
        raise SolverError("multiplicative endmember rule needs E >= 0")
    split, scale = _endmember_split(X, E, A, kernel)
    divisor = scale if regularizers.scale_endmember_terms else 1.0
    terms = endmember_terms(E, kernel, regularizers) if regularizers.has_endmember_terms else None

    def _sweep(ns: slice) -> NDArray[np.float64]:
        num, den = split(ns)
        if terms is not None:
            num = num + terms.numerator[:, ns] / divisor
            den = den + terms.denominator[:, ns] / divisor
        return E[:, ns] * _guarded_ratio(num, den, eps)

    return np.hstack(_map_chunks(_sweep, E.shape[1], workers))


# Normalization and initialization

def normalize_columns(A: Abundances) -> Abundances:
    """a_t <- a_t / ‖a_t‖₁; columns with a zero sum are left unchanged."""
    sums = A.sum(axis=0)
    safe = np.where(sums > 0, sums, 1.0)
    return A / safe


def zero_columns(A: Abundances) -> list[int]:
    """Pixels whose abundance column sums to zero."""
    return [int(t) for t in np.flatnonzero(A.sum(axis=0) <= 0)]


def initialize(config: SolverConfig, X: NDArray[np.float64]) -> tuple[Endmembers, Abundances]:
    """Seeded strictly positive starting factors."""
    X = np.asarray(X, dtype=np.float64)
    L, T = X.shape
    N = config.rank
    rng = np.random.default_rng(config.seed)

    if config.init == InitMethod.RANDOM_UNIFORM:
        E = 1.0 - rng.random((L, N))
        A = 1.0 - rng.random((N, T))
        return E, A

    if N > T:
        raise InputError(f"cannot draw {N} endmembers from {T} data columns")
    picks = rng.choice(T, size=N, replace=False)
    E = X[:, picks] + rng.uniform(0.0, config.init_jitter, size=(L, N))
    A = normalize_columns(1.0 - rng.random((N, T)))
    logger.debug("initialized_from_data", columns=picks.tolist())
    return E, A
